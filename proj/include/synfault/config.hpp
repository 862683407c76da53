#pragma once

// Experiment description shared by every command. Stored as JSON; unknown
// keys are rejected so a typo cannot silently fall back to a default.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synfault/adapt.hpp"
#include "synfault/datastore.hpp"
#include "synfault/dsp.hpp"
#include "synfault/machine.hpp"
#include "synfault/siggen.hpp"

namespace synfault::config {

namespace fs = std::filesystem;
using nlohmann::json;

struct DataConfig {
  // Sidecar list of converted recordings. Empty: simulate a healthy machine
  // and synthesize the target faults with `target_defect`.
  std::string recordings;
  std::size_t segment_length = 4096;
  std::size_t per_class = 1200;
  double simulated_seconds = 60.0;
  machine::MachineProfile machine;
  siggen::DefectSpec target_defect;
};

struct SweepConfig {
  std::vector<double> levels{0.20, 0.15, 0.10, 0.05, 0.01};  // rolling-element keep fractions
  std::vector<adapt::Method> methods{adapt::kAllMethods.begin(), adapt::kAllMethods.end()};
  std::size_t seeds = 10;
};

enum class Evaluation { Transductive, HeldOut };

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::string output = "runs/default";
  DataConfig data;
  siggen::BearingGeometry geometry = siggen::BearingGeometry::cwru_drive_end();
  siggen::DefectSpec defect;
  dsp::PreprocessOptions preprocess;
  adapt::TrainConfig train;
  datastore::ImbalanceSpec imbalance;
  SweepConfig sweep;
  Evaluation evaluation = Evaluation::Transductive;

  std::uint64_t seed_value() const {
    if (!seed) throw ValidationError("a seed is required (config \"seed\" or --seed)");
    return *seed;
  }

  /// Throws ValidationError naming the first problem found.
  void validate() const {
    auto check = [](bool ok, const std::string& msg) {
      if (!ok) throw ValidationError(msg);
    };
    seed_value();
    check(!output.empty(), "output directory is empty");
    if (!data.recordings.empty()) check(fs::exists(data.recordings), "recording list not found: " + data.recordings);
    check(data.segment_length >= 64, "segment_length must be at least 64");
    check(data.per_class >= 1, "per_class must be at least 1");
    check(data.simulated_seconds * data.machine.sample_rate >= static_cast<double>(data.segment_length),
          "simulated recording is shorter than one segment");
    try {
      geometry.validate();
      defect.validate();
      data.target_defect.validate();
      train.validate();
      imbalance.validate();
      for (double l : sweep.levels) detail::require(l > 0.0 && l <= 1.0, "sweep levels must lie in (0, 1]");
      detail::require(!sweep.methods.empty(), "sweep needs at least one method");
      detail::require(sweep.seeds >= 1, "sweep needs at least one seed");
    } catch (const ParameterError& e) {
      throw ValidationError(e.what());
    }
  }
};

// --- JSON ----------------------------------------------------------------------

namespace jsonio {

inline void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ValidationError("unknown key '" + k + "' in " + where);
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline json interval_json(const Interval& i) { return json::array({i.lo, i.hi}); }

inline void get_interval(const json& j, const char* key, Interval& out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2) throw ValidationError(std::string(key) + " must be [lo, hi]");
  out = {a[0].get<double>(), a[1].get<double>()};
}

}  // namespace jsonio

inline json to_json(const machine::MachineProfile& m) {
  return {{"shaft_rpm", m.shaft_rpm},
          {"sample_rate", m.sample_rate},
          {"resonance1_hz", m.resonance1_hz},
          {"resonance2_hz", m.resonance2_hz},
          {"resonance_q_radius", m.resonance_q_radius},
          {"shaft_harmonic_amp", m.shaft_harmonic_amp},
          {"sensor_noise", m.sensor_noise}};
}

inline void from_json(const json& j, machine::MachineProfile& m) {
  jsonio::only_keys(j, {"shaft_rpm", "sample_rate", "resonance1_hz", "resonance2_hz", "resonance_q_radius", "shaft_harmonic_amp", "sensor_noise"},
                    "machine");
  jsonio::get_if(j, "shaft_rpm", m.shaft_rpm);
  jsonio::get_if(j, "sample_rate", m.sample_rate);
  jsonio::get_if(j, "resonance1_hz", m.resonance1_hz);
  jsonio::get_if(j, "resonance2_hz", m.resonance2_hz);
  jsonio::get_if(j, "resonance_q_radius", m.resonance_q_radius);
  jsonio::get_if(j, "shaft_harmonic_amp", m.shaft_harmonic_amp);
  jsonio::get_if(j, "sensor_noise", m.sensor_noise);
}

inline json to_json(const siggen::DefectSpec& d) {
  json j{{"sideband_amplitudes", d.sideband_amplitudes},
         {"beta_range", jsonio::interval_json(d.beta_range)},
         {"jitter_sigma", d.jitter_sigma},
         {"duty_fraction", d.duty_fraction},
         {"pulse_band", jsonio::interval_json(d.pulse_band)},
         {"frequency_scale", d.frequency_scale}};
  j["impact_period_s"] = d.impact_period_s ? json(*d.impact_period_s) : json(nullptr);
  j["modulation_period_s"] = d.modulation_period_s ? json(*d.modulation_period_s) : json(nullptr);
  return j;
}

inline void from_json(const json& j, siggen::DefectSpec& d) {
  jsonio::only_keys(j, {"sideband_amplitudes", "beta_range", "jitter_sigma", "duty_fraction", "pulse_band", "frequency_scale", "impact_period_s",
                        "modulation_period_s"},
                    "defect");
  jsonio::get_if(j, "sideband_amplitudes", d.sideband_amplitudes);
  jsonio::get_interval(j, "beta_range", d.beta_range);
  jsonio::get_if(j, "jitter_sigma", d.jitter_sigma);
  jsonio::get_if(j, "duty_fraction", d.duty_fraction);
  jsonio::get_interval(j, "pulse_band", d.pulse_band);
  jsonio::get_if(j, "frequency_scale", d.frequency_scale);
  for (auto [key, slot] : {std::pair{"impact_period_s", &d.impact_period_s}, std::pair{"modulation_period_s", &d.modulation_period_s}}) {
    if (j.contains(key)) {
      if (j.at(key).is_null()) slot->reset();
      else *slot = j.at(key).get<double>();
    }
  }
}

inline json to_json(const adapt::TrainConfig& t) {
  return {{"method", adapt::to_string(t.method)},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr", t.lr},
          {"lambda_d", t.lambda_d},
          {"lambda_ramp", t.lambda_ramp},
          {"mixup_alpha", t.mixup_alpha},
          {"symmetric_mixup", t.symmetric_mixup},
          {"dropout_rate", t.dropout_rate}};
}

inline void from_json(const json& j, adapt::TrainConfig& t) {
  jsonio::only_keys(j, {"method", "epochs", "batch_size", "lr", "lambda_d", "lambda_ramp", "mixup_alpha", "symmetric_mixup", "dropout_rate"},
                    "train");
  if (j.contains("method")) t.method = adapt::method_from_string(j.at("method").get<std::string>());
  jsonio::get_if(j, "epochs", t.epochs);
  jsonio::get_if(j, "batch_size", t.batch_size);
  jsonio::get_if(j, "lr", t.lr);
  jsonio::get_if(j, "lambda_d", t.lambda_d);
  jsonio::get_if(j, "lambda_ramp", t.lambda_ramp);
  jsonio::get_if(j, "mixup_alpha", t.mixup_alpha);
  jsonio::get_if(j, "symmetric_mixup", t.symmetric_mixup);
  jsonio::get_if(j, "dropout_rate", t.dropout_rate);
}

inline json to_json(const datastore::ImbalanceSpec& s) {
  json j;
  for (FaultClass c : kAllFaultClasses) j[std::string(to_string(c))] = s.fraction[class_index(c)];
  return j;
}

inline void from_json(const json& j, datastore::ImbalanceSpec& s) {
  jsonio::only_keys(j, {"healthy", "outer_race", "inner_race", "rolling_element"}, "imbalance");
  for (FaultClass c : kAllFaultClasses) jsonio::get_if(j, std::string(to_string(c)).c_str(), s.fraction[class_index(c)]);
}

inline json to_json(const RunConfig& c) {
  json methods = json::array();
  for (auto m : c.sweep.methods) methods.push_back(adapt::to_string(m));
  return {{"seed", c.seed ? json(*c.seed) : json(nullptr)},
          {"output", c.output},
          {"data",
           {{"recordings", c.data.recordings},
            {"segment_length", c.data.segment_length},
            {"per_class", c.data.per_class},
            {"simulated_seconds", c.data.simulated_seconds},
            {"machine", to_json(c.data.machine)},
            {"target_defect", to_json(c.data.target_defect)}}},
          {"geometry",
           {{"n_elements", c.geometry.n_elements},
            {"ball_diameter_mm", c.geometry.ball_diameter_mm},
            {"pitch_diameter_mm", c.geometry.pitch_diameter_mm},
            {"contact_angle_rad", c.geometry.contact_angle_rad}}},
          {"defect", to_json(c.defect)},
          {"preprocess", {{"band_lo_hz", c.preprocess.band_lo_hz}, {"band_hi_hz", c.preprocess.band_hi_hz}, {"filter_order", c.preprocess.filter_order}}},
          {"train", to_json(c.train)},
          {"imbalance", to_json(c.imbalance)},
          {"sweep", {{"levels", c.sweep.levels}, {"methods", methods}, {"seeds", c.sweep.seeds}}},
          {"evaluation", c.evaluation == Evaluation::Transductive ? "transductive" : "held-out"}};
}

/// Relative recording paths resolve against `base_dir` (the config's directory).
inline RunConfig from_json(const json& j, const fs::path& base_dir = {}) {
  RunConfig c;
  try {
    jsonio::only_keys(j, {"seed", "output", "data", "geometry", "defect", "preprocess", "train", "imbalance", "sweep", "evaluation"}, "config");
    if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
    jsonio::get_if(j, "output", c.output);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      jsonio::only_keys(d, {"recordings", "segment_length", "per_class", "simulated_seconds", "machine", "target_defect"}, "data");
      jsonio::get_if(d, "recordings", c.data.recordings);
      if (!c.data.recordings.empty() && fs::path(c.data.recordings).is_relative() && !base_dir.empty())
        c.data.recordings = (base_dir / c.data.recordings).lexically_normal().string();
      jsonio::get_if(d, "segment_length", c.data.segment_length);
      jsonio::get_if(d, "per_class", c.data.per_class);
      jsonio::get_if(d, "simulated_seconds", c.data.simulated_seconds);
      if (d.contains("machine")) from_json(d.at("machine"), c.data.machine);
      if (d.contains("target_defect")) from_json(d.at("target_defect"), c.data.target_defect);
    }
    if (j.contains("geometry")) {
      const auto& g = j.at("geometry");
      jsonio::only_keys(g, {"n_elements", "ball_diameter_mm", "pitch_diameter_mm", "contact_angle_rad"}, "geometry");
      jsonio::get_if(g, "n_elements", c.geometry.n_elements);
      jsonio::get_if(g, "ball_diameter_mm", c.geometry.ball_diameter_mm);
      jsonio::get_if(g, "pitch_diameter_mm", c.geometry.pitch_diameter_mm);
      jsonio::get_if(g, "contact_angle_rad", c.geometry.contact_angle_rad);
    }
    if (j.contains("defect")) from_json(j.at("defect"), c.defect);
    if (j.contains("preprocess")) {
      const auto& p = j.at("preprocess");
      jsonio::only_keys(p, {"band_lo_hz", "band_hi_hz", "filter_order"}, "preprocess");
      jsonio::get_if(p, "band_lo_hz", c.preprocess.band_lo_hz);
      jsonio::get_if(p, "band_hi_hz", c.preprocess.band_hi_hz);
      jsonio::get_if(p, "filter_order", c.preprocess.filter_order);
    }
    if (j.contains("train")) from_json(j.at("train"), c.train);
    if (j.contains("imbalance")) from_json(j.at("imbalance"), c.imbalance);
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      jsonio::only_keys(s, {"levels", "methods", "seeds"}, "sweep");
      jsonio::get_if(s, "levels", c.sweep.levels);
      if (s.contains("methods")) {
        c.sweep.methods.clear();
        for (const auto& m : s.at("methods")) c.sweep.methods.push_back(adapt::method_from_string(m.get<std::string>()));
      }
      jsonio::get_if(s, "seeds", c.sweep.seeds);
    }
    if (j.contains("evaluation")) {
      const auto e = j.at("evaluation").get<std::string>();
      if (e == "transductive") c.evaluation = Evaluation::Transductive;
      else if (e == "held-out") c.evaluation = Evaluation::HeldOut;
      else throw ValidationError("evaluation must be \"transductive\" or \"held-out\"");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  } catch (const ParameterError& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.train.seed = c.seed.value_or(0);
  return c;
}

inline RunConfig load(const fs::path& path) {
  json j;
  try {
    j = json::parse(nn::io::read_file(path), nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw ValidationError(e.what());
  }
  return from_json(j, path.parent_path());
}

}  // namespace synfault::config
