// kinegen command-line driver: surrogate / ingest / train / generate /
// eval / analyze. Every command reads a sectioned key=value config (all
// keys optional), derives its randomness from one global seed, writes its
// outputs atomically, and drops a run manifest next to them.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kinegen/analysis.hpp"
#include "kinegen/classifier.hpp"
#include "kinegen/config.hpp"
#include "kinegen/csv.hpp"
#include "kinegen/ingest.hpp"
#include "kinegen/surrogate.hpp"
#include "kinegen/svg.hpp"
#include "kinegen/timegan.hpp"
#include "kinegen/types.hpp"

namespace fs = std::filesystem;
using namespace kinegen;

namespace {

struct Context {
  fs::path workspace;
  Config config;
  std::uint64_t seed = 0;
  std::string config_arg;  // as typed, recorded in manifests
};

fs::path resolve(const Context& ctx, const std::string& p) {
  return ctx.workspace / fs::path(p);
}

// "W1-NC" -> "w1_nc", the per-class config key suffix
std::string class_suffix(const ClassLabel& label) {
  std::string s = label.str();
  for (char& c : s) {
    c = c == '-' ? '_'
                 : static_cast<char>(
                       std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

// --- config section -> typed sub-config ------------------------------------

double run_rate(const Config& c) { return c.get_double("run", "rate", 22.0); }

SurrogateConfig surrogate_config(const Config& c) {
  SurrogateConfig s;
  s.a = c.get_double("surrogate", "a", s.a);
  s.b = c.get_double("surrogate", "b", s.b);
  s.noise_std = c.get_double("surrogate", "noise_std", s.noise_std);
  s.rate = c.get_double("surrogate", "rate", s.rate);
  const auto& labels = ClassLabel::all();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string sfx = class_suffix(labels[i]);
    ClassStats& st = s.classes[i];
    st.count = static_cast<int>(
        c.get_int("surrogate", "count_" + sfx, st.count));
    st.md_mean = c.get_double("surrogate", "md_mean_" + sfx, st.md_mean);
    st.md_std = c.get_double("surrogate", "md_std_" + sfx, st.md_std);
    st.pa_mean = c.get_double("surrogate", "pa_mean_" + sfx, st.pa_mean);
    st.pa_std = c.get_double("surrogate", "pa_std_" + sfx, st.pa_std);
  }
  return s;
}

bool pa_means_overridden(const Config& c) {
  for (const ClassLabel& label : ClassLabel::all()) {
    if (!c.has("surrogate", "pa_mean_" + class_suffix(label))) return false;
  }
  return true;
}

TimeGanConfig timegan_config(const Config& c) {
  TimeGanConfig t;
  t.hidden = static_cast<int>(c.get_int("timegan", "hidden", t.hidden));
  t.layers = static_cast<int>(c.get_int("timegan", "layers", t.layers));
  t.batch_size =
      static_cast<int>(c.get_int("timegan", "batch_size", t.batch_size));
  t.epochs_embedding = static_cast<int>(
      c.get_int("timegan", "epochs_embedding", t.epochs_embedding));
  t.epochs_supervised = static_cast<int>(
      c.get_int("timegan", "epochs_supervised", t.epochs_supervised));
  t.epochs_joint =
      static_cast<int>(c.get_int("timegan", "epochs_joint", t.epochs_joint));
  t.gamma = c.get_double("timegan", "gamma", t.gamma);
  t.eta = c.get_double("timegan", "eta", t.eta);
  t.embedder_sup_weight =
      c.get_double("timegan", "embedder_sup_weight", t.embedder_sup_weight);
  t.lr = c.get_double("timegan", "lr", t.lr);
  t.per_step_discriminator = c.get_bool("timegan", "per_step_discriminator",
                                        t.per_step_discriminator);
  return t;
}

ClassifierConfig classifier_config(const Config& c) {
  ClassifierConfig k;
  k.hidden = static_cast<int>(c.get_int("classifier", "hidden", k.hidden));
  k.fc_hidden =
      static_cast<int>(c.get_int("classifier", "fc_hidden", k.fc_hidden));
  k.folds = static_cast<int>(c.get_int("classifier", "folds", k.folds));
  k.epochs = static_cast<int>(c.get_int("classifier", "epochs", k.epochs));
  k.batch_size =
      static_cast<int>(c.get_int("classifier", "batch_size", k.batch_size));
  k.patience =
      static_cast<int>(c.get_int("classifier", "patience", k.patience));
  k.lr = c.get_double("classifier", "lr", k.lr);
  return k;
}

// --- shared plumbing --------------------------------------------------------

// Archives hold trials as emitted (surrogate boundary samples included);
// every consumer restores natural lengths on load.
TrialSet load_archive(const fs::path& path, Provenance provenance,
                      double rate) {
  const TrialSet raw = read_trialset_csv(path, provenance, rate);
  TrialSet out;
  out.provenance = provenance;
  for (const Trial& t : raw.trials) {
    try {
      Trial trimmed = trim(t);
      if (trimmed.v.size() >= 2) {
        out.trials.push_back(std::move(trimmed));
        continue;
      }
    } catch (const degenerate_data_error&) {
    }
    std::fprintf(stderr, "warning: dropping trial '%s' (blank after trim)\n",
                 t.trial_id.c_str());
  }
  if (out.trials.empty()) {
    throw validation_error("archive has no usable trials: " + path.string());
  }
  out.validate();
  return out;
}

TrialSet load_merged(const Context& ctx, const std::vector<std::string>& paths,
                     Provenance provenance) {
  TrialSet merged;
  merged.provenance = provenance;
  for (const std::string& p : paths) {
    TrialSet part = load_archive(resolve(ctx, p), provenance,
                                 run_rate(ctx.config));
    for (Trial& t : part.trials) merged.trials.push_back(std::move(t));
  }
  merged.validate();
  return merged;
}

void emit_manifest(const Context& ctx, const fs::path& where,
                   const std::string& command, std::vector<std::string> inputs,
                   std::vector<std::string> notes = {}) {
  if (!ctx.config_arg.empty()) inputs.push_back(ctx.config_arg);
  write_manifest(where.string(), manifest_json(command, inputs,
                                               ctx.config.hash(), ctx.seed,
                                               notes));
}

fs::path manifest_path(fs::path output) {
  output.replace_extension(".manifest.json");
  return output;
}

// --- commands ---------------------------------------------------------------

void run_surrogate(const Context& ctx, const std::string& out) {
  SurrogateConfig sc = surrogate_config(ctx.config);
  sc.seed = ctx.seed;
  const TrialSet set = make_surrogate(sc);
  const fs::path path = resolve(ctx, out);
  write_trialset_csv(path, set);
  std::vector<std::string> notes;
  if (!pa_means_overridden(ctx.config)) {
    notes.push_back(
        "peak-amplitude statistics are built-in defaults, not published "
        "values");
  }
  emit_manifest(ctx, manifest_path(path), "surrogate", {}, notes);
  std::printf("surrogate: %zu trials -> %s\n", set.trials.size(),
              path.string().c_str());
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::map<std::string, ClassLabel> read_labels(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) ||
      split_line(line) != std::vector<std::string>{"recording_id", "class"}) {
    throw io_error("labels sidecar needs header recording_id,class: " +
                   path.string());
  }
  std::map<std::string, ClassLabel> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != 2) {
      throw io_error(path.string() + ":" + std::to_string(line_no) +
                     ": expected 2 fields");
    }
    if (!labels.emplace(fields[0], ClassLabel::parse(fields[1])).second) {
      throw validation_error("duplicate label row for recording '" +
                             fields[0] + "'");
    }
  }
  return labels;
}

void run_ingest(const Context& ctx, const std::string& recordings,
                const std::string& out) {
  const fs::path dir = resolve(ctx, recordings);
  if (!fs::is_directory(dir)) {
    throw io_error("recordings directory not found: " + dir.string());
  }
  const auto labels = read_labels(dir / "labels.csv");

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".csv" &&
        entry.path().filename() != "labels.csv") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  TrialSet set;
  set.provenance = Provenance::real;
  for (const fs::path& file : files) {
    RawRecording rec = read_recording_csv(file);
    if (rec.channel_kind == ChannelKind::position) rec = differentiate(rec);
    const std::vector<double> norm = velocity_norm(rec.x, rec.y, rec.z);
    const auto it = labels.find(rec.recording_id);
    if (it == labels.end()) {
      throw validation_error("no label row for recording '" +
                             rec.recording_id + "'");
    }
    const std::vector<Span> spans = segment(norm, rec.rate);
    for (std::size_t i = 0; i < spans.size(); ++i) {
      char id[256];
      std::snprintf(id, sizeof(id), "%s-%03zu", rec.recording_id.c_str(), i);
      std::vector<double> cut(
          norm.begin() + static_cast<std::ptrdiff_t>(spans[i].start),
          norm.begin() + static_cast<std::ptrdiff_t>(spans[i].end + 1));
      std::vector<double> trimmed;
      try {
        trimmed = trim(cut);
      } catch (const degenerate_data_error&) {
        trimmed.clear();
      }
      if (trimmed.size() < 2) {
        std::fprintf(stderr, "warning: skipping segment %s (too short)\n", id);
        continue;
      }
      set.trials.push_back(Trial{id, it->second, std::move(trimmed), rec.rate});
    }
  }
  if (set.trials.empty()) {
    throw validation_error("ingest produced no trials from " + dir.string());
  }
  set.validate();
  const fs::path path = resolve(ctx, out);
  write_trialset_csv(path, set);
  emit_manifest(ctx, manifest_path(path), "ingest", {recordings});
  std::printf("ingest: %zu trials from %zu recordings -> %s\n",
              set.trials.size(), files.size(), path.string().c_str());
}

std::string history_csv(const TrainingHistory& h) {
  std::string out = "phase,epoch,loss\n";
  const auto dump = [&](const char* phase, const std::vector<double>& xs) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      out += phase;
      out += ',';
      out += std::to_string(i);
      out += ',';
      out += format_double(xs[i]);
      out += '\n';
    }
  };
  dump("reconstruction", h.reconstruction);
  dump("supervised", h.supervised);
  dump("discriminator", h.discriminator);
  dump("generator", h.generator);
  dump("refresh", h.refresh);
  return out;
}

void run_train(const Context& ctx, const std::string& archive,
               const std::string& cls) {
  const ClassLabel label = ClassLabel::parse(cls);
  const TrialSet set = load_archive(resolve(ctx, archive), Provenance::real,
                                    run_rate(ctx.config));
  const std::vector<const Trial*> members = set.of_class(label);
  if (members.empty()) {
    throw validation_error("class " + label.str() + " missing from archive " +
                           archive);
  }
  const PaddedBatch batch = pad_class(members);

  TimeGanConfig tc = timegan_config(ctx.config);
  tc.seq_len = static_cast<int>(batch.length);
  tc.seed = mix_seed(ctx.seed,
                     500 + static_cast<std::uint64_t>(class_index(label)));
  TimeGanModel model(tc, label);
  const TrainingHistory hist = model.train(batch);

  const fs::path dir = ctx.workspace / "models" / label.str();
  fs::create_directories(dir);
  model.save(dir / "model.json");
  write_file_atomic(dir / "history.csv", history_csv(hist));
  emit_manifest(ctx, dir / "manifest.json", "train", {archive},
                {"class " + label.str() + ": " +
                 std::to_string(members.size()) + " trials padded to " +
                 std::to_string(batch.length)});
  std::printf("train: %s on %zu trials -> %s\n", label.str().c_str(),
              members.size(), (dir / "model.json").string().c_str());
}

void run_generate(const Context& ctx, const std::string& cls, int n,
                  std::string model_path, std::string out) {
  const ClassLabel label = ClassLabel::parse(cls);
  if (n < 1) throw validation_error("generate: --n must be positive");
  if (model_path.empty()) {
    model_path = (fs::path("models") / label.str() / "model.json").string();
  }
  if (out.empty()) {
    out = (fs::path("archives") / ("synthetic-" + label.str() + ".csv"))
              .string();
  }
  const TimeGanModel model = TimeGanModel::load(resolve(ctx, model_path));
  if (!(model.label() == label)) {
    throw validation_error("model at " + model_path + " is for class " +
                           model.label().str() + ", not " + label.str());
  }
  const TrialSet set = model.sample(
      n, mix_seed(ctx.seed,
                  700 + static_cast<std::uint64_t>(class_index(label))));
  const fs::path path = resolve(ctx, out);
  write_trialset_csv(path, set);
  emit_manifest(ctx, manifest_path(path), "generate", {model_path});
  std::printf("generate: %d %s trials -> %s\n", n, label.str().c_str(),
              path.string().c_str());
}

void run_eval(const Context& ctx, const std::string& real_path,
              const std::vector<std::string>& synth_paths) {
  const TrialSet real = load_archive(resolve(ctx, real_path),
                                     Provenance::real, run_rate(ctx.config));
  const TrialSet synth = load_merged(ctx, synth_paths, Provenance::synthetic);

  ClassifierConfig cc = classifier_config(ctx.config);
  cc.seed = mix_seed(ctx.seed, 401);
  const std::vector<EvalReport> reports = run_table_suite(real, synth, cc);

  nlohmann::ordered_json doc;
  doc["reports"] = nlohmann::ordered_json::array();
  for (const EvalReport& r : reports) doc["reports"].push_back(report_to_json(r));

  const fs::path dir = ctx.workspace / "reports";
  write_file_atomic(dir / "eval.json", doc.dump(2) + "\n");
  write_file_atomic(dir / "eval.txt", render_table(reports));
  std::vector<std::string> inputs = {real_path};
  inputs.insert(inputs.end(), synth_paths.begin(), synth_paths.end());
  emit_manifest(ctx, dir / "eval.manifest.json", "eval", inputs);
  std::printf("%s", render_table(reports).c_str());
}

void run_analyze(const Context& ctx, const std::string& real_path,
                 const std::vector<std::string>& synth_paths) {
  const TrialSet real = load_archive(resolve(ctx, real_path),
                                     Provenance::real, run_rate(ctx.config));
  const TrialSet synth = load_merged(ctx, synth_paths, Provenance::synthetic);
  const fs::path reports = ctx.workspace / "reports";
  const fs::path plots = ctx.workspace / "plots";
  std::vector<std::string> notes;

  // outlier flags, per source
  nlohmann::ordered_json outliers;
  for (const auto& [name, set] :
       {std::pair<const char*, const TrialSet*>{"real", &real},
        {"synthetic", &synth}}) {
    const std::vector<std::string> flagged = flag_outliers(*set);
    outliers[name] = {{"flagged", flagged},
                      {"count", flagged.size()},
                      {"total", set->trials.size()}};
  }
  write_file_atomic(reports / "outliers.json", outliers.dump(2) + "\n");

  // per-class mean profiles, CSV + banded panels
  std::string profile_rows = "class,source,sample_index,t,mean,std\n";
  std::vector<svg::ProfilePanel> panels;
  for (const ClassLabel& label : ClassLabel::all()) {
    svg::ProfilePanel panel;
    panel.title = label.str();
    for (const auto& [name, set] :
         {std::pair<const char*, const TrialSet*>{"real", &real},
          {"synthetic", &synth}}) {
      const std::vector<const Trial*> members = set->of_class(label);
      if (members.empty()) continue;
      const PaddedBatch batch = pad_class(members);
      const MeanProfile mp = mean_profile(batch);
      for (Eigen::Index i = 0; i < mp.mean.size(); ++i) {
        profile_rows += label.str();
        profile_rows += ',';
        profile_rows += name;
        profile_rows += ',';
        profile_rows += std::to_string(i);
        profile_rows += ',';
        profile_rows += format_double(static_cast<double>(i) / batch.rate);
        profile_rows += ',';
        profile_rows += format_double(mp.mean(i));
        profile_rows += ',';
        profile_rows += format_double(mp.std(i));
        profile_rows += '\n';
      }
      const bool is_real = std::strcmp(name, "real") == 0;
      panel.bands.push_back(
          {name,
           is_real ? svg::class_color(
                         static_cast<std::size_t>(class_index(label)))
                   : "#7f7f7f",
           mp, batch.rate});
    }
    panels.push_back(std::move(panel));
  }
  write_file_atomic(reports / "profiles.csv", profile_rows);
  write_file_atomic(plots / "profiles.svg",
                    svg::profile_grid_svg("mean velocity profiles", panels));

  // joint projections over co-padded real + synthetic profiles
  const Population pop = joint_population({&real, &synth});
  const auto scatter_points = [&](const Projection2D& proj,
                                  const std::vector<PopulationPoint>& pts) {
    std::vector<svg::ScatterPoint> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(i);
      out.push_back({proj.points(r, 0), proj.points(r, 1),
                     static_cast<std::size_t>(class_index(pts[i].label)),
                     pts[i].source != Provenance::real});
    }
    return out;
  };

  const Projection2D pca = pca2(pop.X);
  write_file_atomic(reports / "projection_pca.csv",
                    projection_to_csv(pca, pop.points));
  write_file_atomic(reports / "projection_pca.meta.json",
                    projection_metadata_json(pca).dump(2) + "\n");
  write_file_atomic(plots / "projection_pca.svg",
                    svg::scatter_svg("principal component projection",
                                     scatter_points(pca, pop.points)));

  // exact pairwise affinities scale quadratically; cap the population
  const Eigen::Index total = pop.X.rows();
  const auto max_points = static_cast<Eigen::Index>(
      ctx.config.get_int("analysis", "tsne_max_points", 600));
  std::vector<int> keep(static_cast<std::size_t>(total));
  std::iota(keep.begin(), keep.end(), 0);
  if (total > max_points) {
    Rng rng(mix_seed(ctx.seed, 602));
    rng.shuffle(keep);
    keep.resize(static_cast<std::size_t>(max_points));
    std::sort(keep.begin(), keep.end());
    notes.push_back("tsne: embedded a seeded subsample of " +
                    std::to_string(max_points) + " of " +
                    std::to_string(total) + " points");
  }
  if (keep.size() < 8) {
    notes.push_back("tsne: skipped, population too small");
  } else {
    nn::Mat Xs(static_cast<Eigen::Index>(keep.size()), pop.X.cols());
    std::vector<PopulationPoint> pts;
    for (std::size_t i = 0; i < keep.size(); ++i) {
      Xs.row(static_cast<Eigen::Index>(i)) = pop.X.row(keep[i]);
      pts.push_back(pop.points[static_cast<std::size_t>(keep[i])]);
    }
    const double perplexity =
        std::min(ctx.config.get_double("analysis", "perplexity", 30.0),
                 static_cast<double>(keep.size() - 1) / 3.0);
    const int iterations = static_cast<int>(
        ctx.config.get_int("analysis", "tsne_iterations", 1000));
    const Projection2D tsne =
        tsne2(Xs, perplexity, iterations, mix_seed(ctx.seed, 601));
    write_file_atomic(reports / "projection_tsne.csv",
                      projection_to_csv(tsne, pts));
    write_file_atomic(reports / "projection_tsne.meta.json",
                      projection_metadata_json(tsne).dump(2) + "\n");
    write_file_atomic(plots / "projection_tsne.svg",
                      svg::scatter_svg("t-SNE projection",
                                       scatter_points(tsne, pts)));
  }

  // shared-bin feature histograms + Wasserstein distances
  const FeatureHistograms hist = feature_histograms(real, synth);
  write_file_atomic(reports / "histograms.csv", histograms_to_csv(hist));
  write_file_atomic(reports / "distances.json",
                    distances_json(hist).dump(2) + "\n");
  for (const std::string& feat : feature_names()) {
    std::vector<svg::HistogramPanel> hp;
    for (const HistogramCell& cell : hist.cells) {
      if (cell.feature == feat) {
        hp.push_back({cell.label.str(), cell.edges, cell.count_real,
                      cell.count_synth});
      }
    }
    if (!hp.empty()) {
      write_file_atomic(plots / ("hist_" + feat + ".svg"),
                        svg::histogram_grid_svg(feat + " by class", hp));
    }
  }
  for (const std::string& w : hist.warnings) notes.push_back(w);

  std::vector<std::string> inputs = {real_path};
  inputs.insert(inputs.end(), synth_paths.begin(), synth_paths.end());
  emit_manifest(ctx, reports / "analyze.manifest.json", "analyze", inputs,
                notes);
  std::printf("analyze: %zu real + %zu synthetic trials -> %s\n",
              real.trials.size(), synth.trials.size(),
              reports.string().c_str());
}

std::uint64_t parse_env_seed(const char* text) {
  std::uint64_t out = 0;
  const auto [ptr, ec] =
      std::from_chars(text, text + std::strlen(text), out);
  if (ec != std::errc() || *ptr != '\0') {
    throw validation_error("KINEGEN_SEED: not an unsigned integer");
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"velocity-profile generation and evaluation toolkit"};
  app.set_version_flag("--version", std::string(version));
  app.require_subcommand(1);
  app.fallthrough();

  std::string workspace = ".";
  std::string config_path;
  std::uint64_t cli_seed = 0;
  app.add_option("-w,--workspace", workspace,
                 "workspace directory (archives/, models/, reports/, plots/)");
  app.add_option("-c,--config", config_path, "sectioned key=value config file");
  CLI::Option* seed_opt =
      app.add_option("--seed", cli_seed,
                     "global seed (overrides KINEGEN_SEED and [run] seed)");

  CLI::App* sur = app.add_subcommand("surrogate",
                                     "emit a parametric stand-in dataset");
  std::string sur_out = "archives/surrogate.csv";
  sur->add_option("-o,--out", sur_out, "output archive path");

  CLI::App* ing = app.add_subcommand(
      "ingest", "segment raw recordings into a trial archive");
  std::string ing_recordings, ing_out = "archives/real.csv";
  ing->add_option("-r,--recordings", ing_recordings,
                  "directory of recording CSVs plus labels.csv")
      ->required();
  ing->add_option("-o,--out", ing_out, "output archive path");

  CLI::App* tra = app.add_subcommand("train",
                                     "fit one generative model per class");
  std::string tra_archive, tra_class;
  tra->add_option("-a,--archive", tra_archive, "training archive")->required();
  tra->add_option("--class", tra_class, "class label (e.g. W1-NC)")
      ->required();

  CLI::App* gen = app.add_subcommand("generate",
                                     "sample synthetic trials from a model");
  std::string gen_class, gen_model, gen_out;
  int gen_n = 250;
  gen->add_option("--class", gen_class, "class label")->required();
  gen->add_option("-n,--n", gen_n, "number of trials to sample");
  gen->add_option("-m,--model", gen_model,
                  "model file (default models/<class>/model.json)");
  gen->add_option("-o,--out", gen_out,
                  "output archive (default archives/synthetic-<class>.csv)");

  CLI::App* eva = app.add_subcommand(
      "eval", "cross-source classification accuracy tables");
  std::string eva_real;
  std::vector<std::string> eva_synth;
  eva->add_option("--real", eva_real, "reference archive")->required();
  eva->add_option("--synth", eva_synth, "synthetic archive (repeatable)")
      ->required();

  CLI::App* ana = app.add_subcommand(
      "analyze", "profiles, projections, histograms, outliers");
  std::string ana_real;
  std::vector<std::string> ana_synth;
  ana->add_option("--real", ana_real, "reference archive")->required();
  ana->add_option("--synth", ana_synth, "synthetic archive (repeatable)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad usage is a validation failure
  }

  try {
    Context ctx;
    ctx.workspace = workspace;
    ctx.config_arg = config_path;
    if (!config_path.empty()) ctx.config = Config::load(config_path);
    if (seed_opt->count() > 0) {
      ctx.seed = cli_seed;
    } else if (const char* env = std::getenv("KINEGEN_SEED")) {
      ctx.seed = parse_env_seed(env);
    } else {
      ctx.seed = ctx.config.get_u64("run", "seed", 0);
    }

    if (*sur) run_surrogate(ctx, sur_out);
    if (*ing) run_ingest(ctx, ing_recordings, ing_out);
    if (*tra) run_train(ctx, tra_archive, tra_class);
    if (*gen) run_generate(ctx, gen_class, gen_n, gen_model, gen_out);
    if (*eva) run_eval(ctx, eva_real, eva_synth);
    if (*ana) run_analyze(ctx, ana_real, ana_synth);
  } catch (const numerical_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const io_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const validation_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
