#pragma once

#include <array>
#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include "kinegen/common.hpp"

namespace kinegen {

enum class Weight { W1, W2 };
enum class Care { C, NC };

// One of the four object categories: weight (light/heavy) crossed with
// whether the transport required care.
struct ClassLabel {
  Weight weight = Weight::W1;
  Care care = Care::NC;

  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;

  // nominal object masses behind the two weight levels
  double nominal_mass_kg() const {
    return weight == Weight::W1 ? 0.167 : 0.667;
  }

  std::string str() const {
    std::string s = weight == Weight::W1 ? "W1" : "W2";
    s += care == Care::C ? "-C" : "-NC";
    return s;
  }

  static ClassLabel parse(const std::string& text) {
    for (const ClassLabel& label : all()) {
      if (label.str() == text) return label;
    }
    throw validation_error("unknown class label: '" + text +
                           "' (expected one of W1-NC, W1-C, W2-NC, W2-C)");
  }

  // canonical enumeration order, also the reporting order
  static const std::array<ClassLabel, 4>& all() {
    static const std::array<ClassLabel, 4> labels = {
        ClassLabel{Weight::W1, Care::NC}, ClassLabel{Weight::W2, Care::NC},
        ClassLabel{Weight::W1, Care::C}, ClassLabel{Weight::W2, Care::C}};
    return labels;
  }
};

inline int class_index(const ClassLabel& label) {
  int i = 0;
  for (const ClassLabel& l : ClassLabel::all()) {
    if (l == label) return i;
    ++i;
  }
  return -1;
}

enum class ChannelKind { position, velocity };

// A continuous capture stream, either hand positions (m) or velocities
// (m/s), sampled uniformly.
struct RawRecording {
  std::string recording_id;
  double rate = 22.0;  // samples per second
  ChannelKind channel_kind = ChannelKind::position;
  std::vector<double> x, y, z;  // one entry per sample

  void validate() const {
    if (rate <= 0.0) throw validation_error("recording rate must be > 0");
    if (x.size() != y.size() || x.size() != z.size()) {
      throw shape_error("recording channels must have equal length");
    }
    if (x.size() < 2) {
      throw validation_error("recording needs at least 2 samples");
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x[i]) || !std::isfinite(y[i]) ||
          !std::isfinite(z[i])) {
        throw validation_error("recording contains non-finite samples");
      }
    }
  }
};

// One segmented transport movement: a velocity-norm sequence plus its
// object class.
struct Trial {
  std::string trial_id;
  ClassLabel label;
  std::vector<double> v;  // velocity norm, m/s
  double rate = 22.0;

  void validate() const {
    if (v.size() < 2) throw validation_error("trial needs >= 2 samples");
    if (rate <= 0.0) throw validation_error("trial rate must be > 0");
    for (double s : v) {
      if (!std::isfinite(s) || s < 0.0) {
        throw validation_error("trial samples must be finite and >= 0");
      }
    }
  }
};

enum class Provenance { real, surrogate, synthetic };

inline std::string provenance_str(Provenance p) {
  switch (p) {
    case Provenance::real: return "real";
    case Provenance::surrogate: return "surrogate";
    case Provenance::synthetic: return "synthetic";
  }
  return "real";
}

inline Provenance parse_provenance(const std::string& s) {
  if (s == "real") return Provenance::real;
  if (s == "surrogate") return Provenance::surrogate;
  if (s == "synthetic") return Provenance::synthetic;
  throw validation_error("unknown provenance: " + s);
}

struct TrialSet {
  std::vector<Trial> trials;
  Provenance provenance = Provenance::real;

  void validate() const {
    std::unordered_set<std::string> seen;
    for (const Trial& t : trials) {
      t.validate();
      if (!seen.insert(t.trial_id).second) {
        throw validation_error("duplicate trial_id: " + t.trial_id);
      }
    }
  }

  std::vector<const Trial*> of_class(const ClassLabel& label) const {
    std::vector<const Trial*> out;
    for (const Trial& t : trials) {
      if (t.label == label) out.push_back(&t);
    }
    return out;
  }
};

}  // namespace kinegen
