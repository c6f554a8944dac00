#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "kinegen/csv.hpp"
#include "kinegen/ingest.hpp"
#include "kinegen/rng.hpp"
#include "kinegen/types.hpp"

using namespace kinegen;
namespace fs = std::filesystem;

namespace {

Trial make_trial(std::string id, ClassLabel label, std::vector<double> v) {
  return Trial{std::move(id), label, std::move(v), 22.0};
}

fs::path temp_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "kinegen-ingest-test";
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

}  // namespace

TEST_CASE("class labels round-trip and enumerate in canonical order") {
  const auto& all = ClassLabel::all();
  REQUIRE(all.size() == 4);
  REQUIRE(all[0].str() == "W1-NC");
  REQUIRE(all[1].str() == "W2-NC");
  REQUIRE(all[2].str() == "W1-C");
  REQUIRE(all[3].str() == "W2-C");
  for (int i = 0; i < 4; ++i) {
    REQUIRE(ClassLabel::parse(all[i].str()) == all[i]);
    REQUIRE(class_index(all[i]) == i);
  }
  REQUIRE(all[0].nominal_mass_kg() == Catch::Approx(0.167));
  REQUIRE(all[1].nominal_mass_kg() == Catch::Approx(0.667));
  REQUIRE_THROWS_AS(ClassLabel::parse("W3-NC"), validation_error);
}

TEST_CASE("trial and trial set validation") {
  const ClassLabel lbl = ClassLabel::all()[0];
  REQUIRE_NOTHROW(make_trial("a", lbl, {0.1, 0.2}).validate());
  REQUIRE_THROWS_AS(make_trial("a", lbl, {0.1}).validate(), validation_error);
  REQUIRE_THROWS_AS(make_trial("a", lbl, {0.1, -0.2}).validate(),
                    validation_error);
  REQUIRE_THROWS_AS(make_trial("a", lbl, {0.1, std::nan("")}).validate(),
                    validation_error);

  TrialSet set;
  set.trials = {make_trial("a", lbl, {0.1, 0.2}),
                make_trial("a", lbl, {0.3, 0.4})};
  REQUIRE_THROWS_AS(set.validate(), validation_error);
  set.trials[1].trial_id = "b";
  REQUIRE_NOTHROW(set.validate());
  REQUIRE(set.of_class(lbl).size() == 2);
  REQUIRE(set.of_class(ClassLabel::all()[3]).empty());
}

TEST_CASE("velocity norm: pythagorean triples and componentwise oracle") {
  REQUIRE(velocity_norm({3.0}, {4.0}, {0.0})[0] == 5.0);
  REQUIRE(velocity_norm({0.0}, {0.0}, {0.0})[0] == 0.0);

  Rng rng(77);
  std::vector<double> vx, vy, vz;
  for (int i = 0; i < 20; ++i) {
    vx.push_back(rng.uniform(-2, 2));
    vy.push_back(rng.uniform(-2, 2));
    vz.push_back(rng.uniform(-2, 2));
  }
  const auto norm = velocity_norm(vx, vy, vz);
  for (int i = 0; i < 20; ++i) {
    // independent scalar recomputation, hypot-based
    const double expect = std::hypot(std::hypot(vx[i], vy[i]), vz[i]);
    REQUIRE(norm[i] == Catch::Approx(expect).epsilon(1e-12));
  }

  REQUIRE_THROWS_AS(velocity_norm({1, 2}, {1}, {1, 2}), shape_error);
  REQUIRE_THROWS_AS(velocity_norm({std::nan("")}, {0.0}, {0.0}),
                    validation_error);
}

TEST_CASE("differentiate: constant, ramp, and quadratic oracle") {
  RawRecording rec;
  rec.recording_id = "r";
  rec.rate = 22.0;
  rec.channel_kind = ChannelKind::position;

  SECTION("constant position gives zero velocity") {
    rec.x.assign(10, 3.5);
    rec.y.assign(10, -1.0);
    rec.z.assign(10, 0.0);
    const RawRecording v = differentiate(rec);
    REQUIRE(v.channel_kind == ChannelKind::velocity);
    for (double s : v.x) REQUIRE(s == 0.0);
    for (double s : v.y) REQUIRE(s == 0.0);
  }

  SECTION("linear ramp x(t) = t gives unit velocity everywhere") {
    for (int i = 0; i < 12; ++i) {
      rec.x.push_back(i / rec.rate);
      rec.y.push_back(0.0);
      rec.z.push_back(0.0);
    }
    const RawRecording v = differentiate(rec);
    for (double s : v.x) REQUIRE(s == Catch::Approx(1.0).epsilon(1e-12));
  }

  SECTION("quadratic position matches an independent stencil") {
    const int n = 30;
    for (int i = 0; i < n; ++i) {
      const double t = i / rec.rate;
      rec.x.push_back(0.5 * t * t - t);
      rec.y.push_back(t * t);
      rec.z.push_back(0.0);
    }
    const RawRecording v = differentiate(rec);
    // brute-force central/one-sided differences computed separately
    const double dt = 1.0 / rec.rate;
    auto oracle = [&](const std::vector<double>& p, int i) {
      if (i == 0) return (p[1] - p[0]) / dt;
      if (i == n - 1) return (p[n - 1] - p[n - 2]) / dt;
      return (p[i + 1] - p[i - 1]) / (2.0 * dt);
    };
    for (int i = 0; i < n; ++i) {
      REQUIRE(v.x[i] == Catch::Approx(oracle(rec.x, i)).margin(1e-12));
      REQUIRE(v.y[i] == Catch::Approx(oracle(rec.y, i)).margin(1e-12));
    }
  }

  SECTION("fewer than 3 samples is rejected") {
    rec.x = {1.0, 2.0};
    rec.y = {0.0, 0.0};
    rec.z = {0.0, 0.0};
    REQUIRE_THROWS_AS(differentiate(rec), validation_error);
  }
}

TEST_CASE("segment finds a bell pulse with 5%-of-peak endpoints") {
  // bell of peak 1.0 embedded in zeros; endpoints must be the first
  // samples below 0.05 on each side, found here by a separate linear scan
  std::vector<double> stream(60, 0.0);
  const int center = 30, half = 12;
  for (int i = -half; i <= half; ++i) {
    const double u = static_cast<double>(i) / half;
    stream[center + i] = std::exp(-8.0 * u * u);  // edges ~ e^-8 < 0.05
  }

  const auto spans = segment(stream, 22.0);
  REQUIRE(spans.size() == 1);

  std::size_t lo = center;
  while (lo > 0 && stream[lo] >= 0.05) --lo;
  std::size_t hi = center;
  while (hi + 1 < stream.size() && stream[hi] >= 0.05) ++hi;
  REQUIRE(spans[0].start == lo);
  REQUIRE(spans[0].end == hi);
  REQUIRE(stream[spans[0].start] < 0.05);
  REQUIRE(stream[spans[0].end] < 0.05);
  REQUIRE(stream[spans[0].start + 1] >= 0.05);
  REQUIRE(stream[spans[0].end - 1] >= 0.05);
}

TEST_CASE("segment separates distant pulses and ignores flat streams") {
  std::vector<double> stream;
  auto push_pulse = [&](double peak) {
    for (double s : {0.1, 0.4, 1.0, 0.4, 0.1}) stream.push_back(s * peak);
  };
  push_pulse(1.0);
  stream.insert(stream.end(), 12, 0.0);
  push_pulse(0.8);
  stream.insert(stream.end(), 3, 0.0);

  const auto spans = segment(stream, 22.0);
  REQUIRE(spans.size() == 2);
  REQUIRE(spans[0].end < spans[1].start);

  REQUIRE(segment(std::vector<double>(40, 0.0), 22.0).empty());
  REQUIRE(segment({}, 22.0).empty());
  // peaks below the absolute floor never seed a span
  REQUIRE(segment({0.0, 0.04, 0.0, 0.04, 0.0}, 22.0).empty());
  REQUIRE_THROWS_AS(segment({0.1, -0.2, 0.1}, 22.0), validation_error);
}

TEST_CASE("trim drops sub-threshold ends only") {
  REQUIRE(trim(std::vector<double>{0, 0.001, 0.5, 0.7, 0.002}) ==
          std::vector<double>{0.5, 0.7});
  const std::vector<double> solid{0.2, 0.01, 0.3};
  REQUIRE(trim(solid) == solid);
  // threshold comparison is strict: exactly 0.005 survives
  REQUIRE(trim(std::vector<double>{0.005, 0.1}) ==
          std::vector<double>{0.005, 0.1});
  // interior sub-threshold samples are kept
  REQUIRE(trim(std::vector<double>{0.004, 0.1, 0.001, 0.1, 0.004}) ==
          std::vector<double>{0.1, 0.001, 0.1});
  REQUIRE_THROWS_AS(trim(std::vector<double>{0.001, 0.004, 0.0}),
                    degenerate_data_error);

  Trial t = make_trial("t", ClassLabel::all()[0], {0.0, 0.3, 0.4, 0.002});
  const Trial trimmed = trim(t);
  REQUIRE(trimmed.v == std::vector<double>{0.3, 0.4});
  REQUIRE(trimmed.trial_id == "t");
}

TEST_CASE("pad_class zero-pads on the right to the longest trial") {
  const ClassLabel lbl = ClassLabel::all()[2];
  std::vector<Trial> trials = {make_trial("a", lbl, {0.1, 0.2, 0.3}),
                               make_trial("b", lbl, {0.5, 0.6, 0.7, 0.8, 0.9})};
  const PaddedBatch batch = pad_class(trials);
  REQUIRE(batch.length == 5);
  REQUIRE(batch.rows.rows() == 2);
  REQUIRE(batch.rows.cols() == 5);
  REQUIRE(batch.original_lengths == std::vector<Eigen::Index>{3, 5});
  REQUIRE(batch.rows(0, 2) == 0.3);
  REQUIRE(batch.rows(0, 3) == 0.0);
  REQUIRE(batch.rows(0, 4) == 0.0);
  REQUIRE(batch.rows(1, 4) == 0.9);
  REQUIRE(batch.label == lbl);

  const PaddedBatch single = pad_class(std::vector<Trial>{trials[0]});
  REQUIRE(single.length == 3);
  REQUIRE(single.rows.cols() == 3);

  REQUIRE_THROWS_AS(pad_class(std::vector<Trial>{}), validation_error);
  std::vector<Trial> mixed = trials;
  mixed[1].label = ClassLabel::all()[0];
  REQUIRE_THROWS_AS(pad_class(mixed), validation_error);
}

TEST_CASE("doubles survive a csv round trip exactly") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.uniform(-10, 10) * std::pow(10.0, rng.below(7));
    REQUIRE(parse_double(format_double(v)) == v);
  }
  REQUIRE(parse_double(format_double(0.1)) == 0.1);
  REQUIRE(format_double(1.0) == "1");
  REQUIRE_THROWS_AS(parse_double("not-a-number"), io_error);
}

TEST_CASE("trial archives round-trip through csv") {
  TrialSet set;
  set.provenance = Provenance::surrogate;
  set.trials = {
      make_trial("s1", ClassLabel::all()[0], {0.1, 0.25, 0.125}),
      make_trial("s2", ClassLabel::all()[3], {0.5, 1.0 / 3.0}),
  };
  const std::string csv = trialset_to_csv(set);
  const TrialSet back = trialset_from_csv(csv, Provenance::surrogate);
  REQUIRE(back.trials.size() == 2);
  REQUIRE(back.trials[0].trial_id == "s1");
  REQUIRE(back.trials[0].label == set.trials[0].label);
  REQUIRE(back.trials[0].v == set.trials[0].v);
  REQUIRE(back.trials[1].v == set.trials[1].v);
  REQUIRE(back.provenance == Provenance::surrogate);

  // non-contiguous trial rows are rejected
  const std::string bad =
      "trial_id,class,sample_index,v\n"
      "a,W1-NC,0,0.1\n"
      "b,W1-NC,0,0.2\n"
      "a,W1-NC,1,0.3\n";
  REQUIRE_THROWS_AS(trialset_from_csv(bad), validation_error);
  REQUIRE_THROWS_AS(trialset_from_csv("wrong,header\n"), io_error);
}

TEST_CASE("recording csv reader infers rate and channel kind") {
  const fs::path dir = temp_dir();
  const fs::path pos_path = dir / "rec01.csv";
  {
    std::ofstream out(pos_path);
    out << "t,x,y,z\n";
    for (int i = 0; i < 23; ++i) {
      out << (i / 22.0) << "," << (0.01 * i) << ",0,0\n";
    }
  }
  const RawRecording rec = read_recording_csv(pos_path);
  REQUIRE(rec.recording_id == "rec01");
  REQUIRE(rec.channel_kind == ChannelKind::position);
  REQUIRE(rec.rate == Catch::Approx(22.0).epsilon(1e-9));
  REQUIRE(rec.x.size() == 23);

  const fs::path vel_path = dir / "rec02.csv";
  {
    std::ofstream out(vel_path);
    out << "t,vx,vy,vz\n";
    out << "0,0.1,0,0\n0.05,0.2,0,0\n0.1,0.3,0,0\n";
  }
  REQUIRE(read_recording_csv(vel_path).channel_kind == ChannelKind::velocity);
  REQUIRE(read_recording_csv(vel_path).rate == Catch::Approx(20.0));

  REQUIRE_THROWS_AS(read_recording_csv(dir / "missing.csv"), io_error);
}

TEST_CASE("atomic writes leave no temp files behind") {
  const fs::path dir = temp_dir();
  const fs::path target = dir / "atomic.txt";
  write_file_atomic(target, "payload");
  REQUIRE(read_file(target) == "payload");
  write_file_atomic(target, "payload2");
  REQUIRE(read_file(target) == "payload2");
  bool leftovers = false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".tmp") leftovers = true;
  }
  REQUIRE_FALSE(leftovers);
}

TEST_CASE("full ingest path: positions to padded batch") {
  // synthetic bell written as positions, differentiated, segmented,
  // trimmed, then padded — mirrors the production pipeline end to end
  RawRecording rec;
  rec.recording_id = "pipe";
  rec.rate = 22.0;
  rec.channel_kind = ChannelKind::position;
  const int n = 80;
  double xpos = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = (i - 40.0) / 10.0;
    const double v = std::exp(-u * u);  // bell velocity
    xpos += v / rec.rate;
    rec.x.push_back(xpos);
    rec.y.push_back(0.0);
    rec.z.push_back(0.0);
  }
  const RawRecording vel = differentiate(rec);
  const auto norm = velocity_norm(vel.x, vel.y, vel.z);
  const auto spans = segment(norm, rec.rate);
  REQUIRE(spans.size() == 1);

  std::vector<double> cut(norm.begin() + spans[0].start,
                          norm.begin() + spans[0].end + 1);
  const auto trimmed = trim(cut);
  REQUIRE_FALSE(trimmed.empty());
  REQUIRE(trimmed.front() >= trim_threshold);
  REQUIRE(trimmed.back() >= trim_threshold);

  const ClassLabel lbl = ClassLabel::all()[0];
  const PaddedBatch batch =
      pad_class(std::vector<Trial>{Trial{"pipe-0", lbl, trimmed, rec.rate}});
  REQUIRE(batch.rows.cols() == static_cast<Eigen::Index>(trimmed.size()));
}
