#include "gasseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "gasseg/gas.hpp"

namespace gasseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

void overlay(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    auto it = base.find(key);
    if (it == base.end()) throw ConfigError("unknown config key: " + path);
    if (it->is_object()) {
      overlay(*it, value, path);
    } else if (it->is_null() || value.is_null() || same_kind(*it, value)) {
      *it = value;
    } else {
      throw ConfigError("config key " + path + " has the wrong type");
    }
  }
}

template <typename T>
T get(const json& config, const char* section, const char* key) {
  try {
    return config.at(section).at(key).get<T>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config key ") + section + "." + key + ": " + ex.what());
  }
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw DataError("malformed JSON in " + path.string() + ": " + ex.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create directory " + dir.string());
}

json result_json(const EvalResult& r) {
  return {{"n_ref", r.n_ref},         {"n_hyp", r.n_hyp},       {"n_hit", r.n_hit},
          {"precision", r.precision}, {"recall", r.recall},     {"f1", r.f1},
          {"hit_rate", r.hit_rate},   {"over_segmentation", r.over_segmentation},
          {"r_value", r.r_value},     {"degenerate", r.degenerate}};
}

EvalResult result_from_json(const json& j) {
  EvalResult r;
  r.n_ref = j.at("n_ref").get<long>();
  r.n_hyp = j.at("n_hyp").get<long>();
  r.n_hit = j.at("n_hit").get<long>();
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.hit_rate = j.at("hit_rate").get<double>();
  r.over_segmentation = j.at("over_segmentation").get<double>();
  r.r_value = j.at("r_value").get<double>();
  r.degenerate = j.at("degenerate").get<bool>();
  return r;
}

std::string format_weight(double w) {
  std::ostringstream s;
  s.precision(3);
  s << w;
  return s.str();
}

std::string condition_of(const json& corpus_config) {
  if (!corpus_config.is_object() || !corpus_config.contains("snr_db") || corpus_config["snr_db"].is_null())
    return "clean";
  return "snr" + format_weight(corpus_config["snr_db"].get<double>()) + "db";
}

}  // namespace

json default_run_config() {
  return {
      {"seed", 1},
      {"corpus",
       {{"num_utterances", 50},
        {"first_utterance", 0},
        {"segments_min", 6},
        {"segments_max", 14},
        {"segment_ms_min", 50.0},
        {"segment_ms_max", 200.0},
        {"generator", "filtered_noise"},
        {"num_labels", 8},
        {"sample_rate_hz", 16000},
        {"snr_db", nullptr}}},
      {"features", {{"frame_shift_ms", 10.0}, {"frame_length_ms", 25.0}}},
      {"model",
       {{"architecture", "ae_grnn"},
        {"cell", "gru"},
        {"recurrent_units", 32},
        {"ff_units", 64},
        {"dropout_rate", 0.3}}},
      {"train", {{"epochs", 30}, {"batch_size", 2}, {"lr", 1e-3}, {"clip_norm", 0.0}}},
      {"segment",
       {{"detector", "gas:update"},
        {"threshold", nullptr},
        {"num_thresholds", 41},
        {"w_grid", {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}},
        {"gas_layer", 0},
        {"interp_gate", "update"},
        {"normalize", true},
        {"periodic_ms", 80.0}}},
      {"eval", {{"tolerance_ms", 20.0}, {"exclude_edges", true}}},
  };
}

json resolve_config(const json& user) {
  json config = default_run_config();
  if (user.is_null()) return config;
  overlay(config, user, "");
  return config;
}

json load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw ConfigError("malformed config file " + path.string() + ": " + ex.what());
  }
}

std::uint64_t stage_seed(const json& config, std::string_view stage) {
  return derive_seed(config.at("seed").get<std::uint64_t>(), stage);
}

SyntheticSpec synthetic_spec(const json& config) {
  SyntheticSpec s;
  s.num_utterances = get<int>(config, "corpus", "num_utterances");
  s.first_utterance = get<int>(config, "corpus", "first_utterance");
  s.segments_min = get<int>(config, "corpus", "segments_min");
  s.segments_max = get<int>(config, "corpus", "segments_max");
  s.segment_ms_min = get<double>(config, "corpus", "segment_ms_min");
  s.segment_ms_max = get<double>(config, "corpus", "segment_ms_max");
  s.generator = parse_generator_kind(get<std::string>(config, "corpus", "generator"));
  s.num_labels = get<int>(config, "corpus", "num_labels");
  s.sample_rate_hz = get<int>(config, "corpus", "sample_rate_hz");
  s.seed = stage_seed(config, "synth");
  return s;
}

FrameConfig frame_config(const json& config) {
  return {get<double>(config, "features", "frame_shift_ms"), get<double>(config, "features", "frame_length_ms")};
}

ModelConfig model_config(const json& config) {
  ModelConfig c;
  c.architecture = parse_architecture(get<std::string>(config, "model", "architecture"));
  c.cell = parse_cell_type(get<std::string>(config, "model", "cell"));
  c.recurrent_units = get<int>(config, "model", "recurrent_units");
  c.ff_units = get<int>(config, "model", "ff_units");
  c.dropout_rate = get<double>(config, "model", "dropout_rate");
  validate(c);
  return c;
}

TrainConfig train_config(const json& config) {
  TrainConfig t;
  t.epochs = get<int>(config, "train", "epochs");
  t.batch_size = get<int>(config, "train", "batch_size");
  t.lr = get<double>(config, "train", "lr");
  t.clip_norm = get<double>(config, "train", "clip_norm");
  t.seed = stage_seed(config, "train");
  return t;
}

EvalOptions eval_options(const json& config) {
  return {get<double>(config, "eval", "tolerance_ms"), get<bool>(config, "eval", "exclude_edges")};
}

fs::path manifest_path(const fs::path& corpus_dir) { return corpus_dir / "manifest.json"; }

fs::path resolve_audio_path(const fs::path& corpus_dir, const ManifestEntry& entry) {
  const fs::path p(entry.wav);
  return p.is_absolute() ? p : corpus_dir / p;
}

namespace {

Waveform maybe_add_noise(const json& config, const Waveform& wave, const std::string& id) {
  const auto& snr = config.at("corpus").at("snr_db");
  if (snr.is_null()) return wave;
  Waveform noisy = add_white_noise(wave, snr.get<double>(), derive_seed(stage_seed(config, "noise"), id));
  double peak = 0.0;
  for (double s : noisy.samples) peak = std::max(peak, std::abs(s));
  // Keep the stored audio in [-1, 1]; a global gain does not change the SNR.
  const double gain = peak > 0.99 ? 0.99 / peak : 1.0;
  for (double& s : noisy.samples) s = static_cast<double>(static_cast<float>(s * gain));
  return noisy;
}

}  // namespace

CorpusManifest synth_to_dir(const json& config, const fs::path& out_dir) {
  const auto spec = synthetic_spec(config);
  const auto corpus = synth_corpus(spec);
  ensure_dir(out_dir / "wav");
  CorpusManifest manifest;
  manifest.config = config;
  for (const auto& utt : corpus) {
    const std::string rel = "wav/" + utt.id + ".wav";
    write_wav(out_dir / rel, maybe_add_noise(config, utt.wave, utt.id), WavEncoding::float32);
    manifest.utterances.push_back(make_manifest_entry(utt, rel));
  }
  write_manifest(manifest_path(out_dir), manifest);
  return manifest;
}

CorpusManifest ingest_timit(const json& config, const fs::path& timit_root, const fs::path& out_dir) {
  if (!fs::is_directory(timit_root)) throw DataError("not a directory: " + timit_root.string());
  std::vector<fs::path> wavs;
  for (const auto& entry : fs::recursive_directory_iterator(timit_root)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") wavs.push_back(entry.path());
  }
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw DataError("no .wav files under " + timit_root.string());

  ensure_dir(out_dir / "wav");
  const bool noisy = !config.at("corpus").at("snr_db").is_null();
  CorpusManifest manifest;
  manifest.config = config;
  for (const auto& wav_path : wavs) {
    fs::path phn = wav_path;
    phn.replace_extension(wav_path.extension() == ".WAV" ? ".PHN" : ".phn");
    if (!fs::exists(phn)) continue;
    std::string id = fs::relative(wav_path, timit_root).replace_extension().generic_string();
    std::replace(id.begin(), id.end(), '/', '_');

    Utterance utt;
    utt.id = id;
    utt.wave = read_wav(wav_path);
    std::ifstream in(phn);
    std::stringstream text;
    text << in.rdbuf();
    utt.annotation = parse_phn(text.str(), utt.wave.sample_rate_hz);

    ManifestEntry e;
    if (noisy) {
      e = make_manifest_entry(utt, "wav/" + id + ".wav");
      write_wav(out_dir / e.wav, maybe_add_noise(config, utt.wave, id), WavEncoding::float32);
    } else {
      e = make_manifest_entry(utt, fs::absolute(wav_path).string());
    }
    auto& iv = utt.annotation.intervals;
    std::vector<long> kept;
    for (std::size_t k = 1; k < iv.size(); ++k) {
      if (k == 1 && iv.front().label == "h#") continue;
      if (k + 1 == iv.size() && iv.back().label == "h#") continue;
      if (iv[k].start_sample > 0 && iv[k].start_sample < e.num_samples) kept.push_back(iv[k].start_sample);
    }
    e.boundaries = std::move(kept);
    manifest.utterances.push_back(std::move(e));
  }
  write_manifest(manifest_path(out_dir), manifest);
  return manifest;
}

FeaturizeReport featurize_corpus(const fs::path& corpus_dir, const FrameConfig& framing) {
  const auto manifest = read_manifest(manifest_path(corpus_dir));
  ensure_dir(corpus_dir / "features");
  FeaturizeReport report;
  for (const auto& entry : manifest.utterances) {
    const fs::path wav = resolve_audio_path(corpus_dir, entry);
    if (!fs::exists(wav)) throw DataError("missing audio for " + entry.id + ": " + wav.string());
    const fs::path cache = corpus_dir / "features" / (entry.id + ".feat");
    bool corrupt = false;
    if (fs::exists(cache)) {
      try {
        const auto h = read_feature_cache_header(cache);
        read_feature_cache(cache, entry.id);
        const bool consistent = h.source_samples == entry.num_samples && h.dims == kFeatureDim &&
                                h.frame_shift_ms == framing.frame_shift_ms &&
                                h.frame_length_ms == framing.frame_length_ms &&
                                h.num_frames == frame_count(entry.num_samples, entry.sample_rate_hz, framing);
        if (consistent && fs::last_write_time(cache) >= fs::last_write_time(wav)) {
          ++report.cached;
          continue;
        }
      } catch (const DataError& ex) {
        corrupt = true;
        report.warnings.push_back("re-extracting corrupt feature cache for " + entry.id + ": " + ex.what());
      }
    }
    const Waveform wave = read_wav(wav);
    if (static_cast<long>(wave.samples.size()) != entry.num_samples)
      throw DataError("audio length of " + entry.id + " disagrees with the manifest");
    auto features = cmvn(mfcc39(wave, framing));
    features.utterance_id = entry.id;
    write_feature_cache(cache, features, entry.num_samples);
    ++(corrupt ? report.repaired : report.computed);
  }
  return report;
}

std::vector<FeatureSequence> load_corpus_features(const fs::path& corpus_dir, const CorpusManifest& manifest) {
  std::vector<FeatureSequence> out;
  out.reserve(manifest.utterances.size());
  for (const auto& entry : manifest.utterances) {
    const fs::path cache = corpus_dir / "features" / (entry.id + ".feat");
    if (!fs::exists(cache)) throw DataError("missing feature cache for " + entry.id + " (run featurize first)");
    out.push_back(read_feature_cache(cache, entry.id));
  }
  return out;
}

std::vector<BoundarySet> reference_boundaries(const CorpusManifest& manifest) {
  std::vector<BoundarySet> out;
  for (const auto& e : manifest.utterances)
    out.push_back({e.boundary_times_ms(), BoundarySource::ground_truth, e.duration_ms()});
  return out;
}

TrainResult train_to_checkpoint(const json& config, const fs::path& corpus_dir, const fs::path& checkpoint) {
  const auto manifest = read_manifest(manifest_path(corpus_dir));
  const auto features = load_corpus_features(corpus_dir, manifest);
  TrainedModel model = build(model_config(config), stage_seed(config, "init"));
  if (checkpoint.has_parent_path()) ensure_dir(checkpoint.parent_path());
  TrainResult result;
  try {
    result = train(std::move(model), features, train_config(config));
  } catch (const DivergenceError& ex) {
    save(ex.last_good(), checkpoint.string() + ".last_good.json");
    throw;
  }
  save(result.model, checkpoint);
  std::ofstream csv(checkpoint.string() + ".loss.csv");
  if (!csv) throw DataError("cannot write loss history");
  csv.precision(17);
  csv << "epoch,mean_frame_loss\n";
  for (std::size_t k = 0; k < result.loss_history.size(); ++k) csv << k + 1 << ',' << result.loss_history[k] << '\n';
  write_json(checkpoint.string() + ".config.json",
             {{"version", std::string(version_string())}, {"config", config}, {"corpus", fs::absolute(corpus_dir)}});
  return result;
}

std::string DetectorSpec::label() const {
  switch (kind) {
    case DetectorKind::gas: return "gas:" + std::string(to_string(gate));
    case DetectorKind::rpm: return "rpm";
    case DetectorKind::interp: return weight ? "interp:" + format_weight(*weight) : "interp";
    case DetectorKind::hac: return "hac";
    case DetectorKind::periodic: return "periodic:" + format_weight(period_ms);
  }
  return "?";
}

DetectorSpec parse_detector(std::string_view text, double default_period_ms) {
  DetectorSpec d;
  d.period_ms = default_period_ms;
  const auto colon = text.find(':');
  const std::string_view head = text.substr(0, colon);
  const std::string arg = colon == std::string_view::npos ? "" : std::string(text.substr(colon + 1));
  auto number = [&](const char* what) {
    try {
      std::size_t used = 0;
      const double v = std::stod(arg, &used);
      if (used != arg.size()) throw std::invalid_argument(what);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad ") + what + " in detector '" + std::string(text) + "'");
    }
  };
  if (head == "gas") {
    d.kind = DetectorKind::gas;
    if (arg.empty()) throw ConfigError("gas detector needs a gate, e.g. gas:update");
    d.gate = parse_gate_tag(arg);
  } else if (head == "rpm" && arg.empty()) {
    d.kind = DetectorKind::rpm;
  } else if (head == "interp") {
    d.kind = DetectorKind::interp;
    if (!arg.empty()) {
      d.weight = number("weight");
      if (*d.weight < 0.0 || *d.weight > 1.0) throw ConfigError("interp weight must be in [0, 1]");
    }
  } else if (head == "hac" && arg.empty()) {
    d.kind = DetectorKind::hac;
  } else if (head == "periodic") {
    d.kind = DetectorKind::periodic;
    if (!arg.empty()) d.period_ms = number("period");
    if (!(d.period_ms > 0.0)) throw ConfigError("period must be positive");
  } else {
    throw ConfigError("unknown detector: " + std::string(text));
  }
  return d;
}

DetectorSpec detector_from_config(const json& config) {
  DetectorSpec d = parse_detector(get<std::string>(config, "segment", "detector"),
                                  get<double>(config, "segment", "periodic_ms"));
  if (d.kind == DetectorKind::interp || d.kind == DetectorKind::rpm)
    d.gate = parse_gate_tag(get<std::string>(config, "segment", "interp_gate"));
  return d;
}

namespace {

struct RpmSignals {
  std::vector<DetectorSignal> error;
  std::vector<DetectorSignal> gas;
};

const GateTrace& pick_trace(const std::vector<GateTrace>& traces, GateTag gate, int layer) {
  for (const auto& t : traces)
    if (t.gate == gate && t.layer_index == layer) return t;
  throw ConfigError("model has no recurrent layer " + std::to_string(layer));
}

RpmSignals rpm_signals(const TrainedModel& model, GateTag gate, std::span<const FeatureSequence> features,
                       const json& config, bool want_gas) {
  if (!is_predictor(model.config.architecture))
    throw ConfigError("rpm and interp detectors need an rpm_2layer or rpm_4layer checkpoint");
  const bool normalize = get<bool>(config, "segment", "normalize");
  const int layer = get<int>(config, "segment", "gas_layer");
  RpmSignals out;
  for (const auto& fs : features) {
    const GateSet capture = want_gas ? GateSet{gate} : GateSet{};
    const auto fwd = rpm_forward(model, fs.frames, capture);
    auto e = rpm_error_signal(fwd.values, fs.frames, fs.frame_shift_ms).signal;
    out.error.push_back(normalize ? normalize_signal(std::move(e)) : std::move(e));
    if (want_gas) {
      auto g = diff_gas(mean_gas(pick_trace(fwd.traces, gate, layer)), fs.frame_shift_ms);
      out.gas.push_back(normalize ? normalize_signal(std::move(g)) : std::move(g));
    }
  }
  return out;
}

std::vector<DetectorSignal> mix(const RpmSignals& s, double w) {
  std::vector<DetectorSignal> out;
  for (std::size_t k = 0; k < s.error.size(); ++k) out.push_back(interpolate(s.error[k], s.gas[k], w));
  return out;
}

}  // namespace

std::vector<DetectorSignal> detector_signals(const TrainedModel& model, const DetectorSpec& detector,
                                             std::span<const FeatureSequence> features, const json& config,
                                             double weight) {
  const bool normalize = get<bool>(config, "segment", "normalize");
  const int layer = get<int>(config, "segment", "gas_layer");
  switch (detector.kind) {
    case DetectorKind::gas: {
      std::vector<DetectorSignal> out;
      for (const auto& fs : features) {
        const auto fwd = forward_sequence(model.network, fs.frames, {detector.gate});
        auto g = diff_gas(mean_gas(pick_trace(fwd.traces, detector.gate, layer)), fs.frame_shift_ms);
        out.push_back(normalize ? normalize_signal(std::move(g)) : std::move(g));
      }
      return out;
    }
    case DetectorKind::rpm:
      return rpm_signals(model, detector.gate, features, config, false).error;
    case DetectorKind::interp:
      return mix(rpm_signals(model, detector.gate, features, config, true), detector.weight.value_or(weight));
    case DetectorKind::hac:
    case DetectorKind::periodic:
      break;
  }
  throw ConfigError("detector " + detector.label() + " has no model signal");
}

void write_boundary_file(const fs::path& path, const CorpusBoundaries& boundaries, const json& metadata) {
  json doc = metadata;
  auto& b = doc["boundaries"] = json::object();
  for (const auto& [id, set] : boundaries) b[id] = set.times_ms;
  write_json(path, doc);
}

CorpusBoundaries read_boundary_file(const fs::path& path, const CorpusManifest& manifest) {
  const json doc = read_json(path);
  CorpusBoundaries out;
  try {
    const auto& b = doc.at("boundaries");
    for (const auto& e : manifest.utterances) {
      if (!b.contains(e.id)) throw DataError("boundary file has no entry for utterance " + e.id);
      BoundarySet set{b.at(e.id).get<std::vector<double>>(), BoundarySource::gas, e.duration_ms()};
      validate(set);
      out.emplace(e.id, std::move(set));
    }
    if (b.size() != manifest.utterances.size())
      throw DataError("boundary file lists utterances missing from the manifest");
  } catch (const json::exception& ex) {
    throw DataError("malformed boundary file " + path.string() + ": " + ex.what());
  }
  return out;
}

void write_pr_curve(const fs::path& path, std::span<const SweepPoint> curve) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "threshold,precision,recall,f1,over_segmentation,hit_rate,r_value\n";
  for (const auto& p : curve) {
    const auto& r = p.result;
    out << p.threshold << ',' << r.precision << ',' << r.recall << ',' << r.f1 << ',' << r.over_segmentation << ','
        << r.hit_rate << ',' << r.r_value << '\n';
  }
}

SegmentOutcome segment_corpus(const json& config, const SegmentRequest& req) {
  const auto manifest = read_manifest(manifest_path(req.corpus_dir));
  const auto features = load_corpus_features(req.corpus_dir, manifest);
  const auto refs = reference_boundaries(manifest);
  const EvalOptions opts = eval_options(config);
  const int num_thresholds = get<int>(config, "segment", "num_thresholds");
  const DetectorSpec& det = req.detector;
  ensure_dir(req.out_dir);

  std::optional<TrainedModel> model;
  const bool needs_model = det.kind == DetectorKind::gas || det.kind == DetectorKind::rpm ||
                           det.kind == DetectorKind::interp;
  if (needs_model) {
    if (!req.checkpoint) throw ConfigError("detector " + det.label() + " needs --checkpoint");
    model = load(*req.checkpoint);
  }

  SegmentOutcome outcome;
  std::vector<DetectorSignal> chosen_signals;
  std::vector<std::vector<HacMerge>> merges;
  std::function<BoundarySet(double, std::size_t)> hyp_at;

  auto run_signals = [&](const std::vector<DetectorSignal>& signals) {
    const BoundarySource src = det.kind == DetectorKind::gas   ? BoundarySource::gas
                               : det.kind == DetectorKind::rpm ? BoundarySource::rpm
                                                               : BoundarySource::interpolated;
    auto picker = [&signals, &refs, src](double thr, std::size_t k) {
      return peak_pick(signals[k], thr, refs[k].duration_ms, src);
    };
    std::vector<double> thresholds =
        req.threshold ? std::vector<double>{*req.threshold} : quantile_thresholds(signals, num_thresholds);
    return sweep(refs, thresholds, picker, opts);
  };

  if (det.kind == DetectorKind::periodic) {
    hyp_at = [&](double, std::size_t k) { return periodic_boundaries(det.period_ms, refs[k].duration_ms); };
    const auto res = sweep(refs, {0.0}, hyp_at, opts);
    outcome.best = res.best_point().result;
  } else if (det.kind == DetectorKind::hac) {
    std::vector<double> pooled;
    for (const auto& fs : features) {
      merges.push_back(hac_merge_sequence(fs.frames));
      for (const auto& m : merges.back()) pooled.push_back(m.cost);
    }
    hyp_at = [&](double thr, std::size_t k) {
      BoundarySet out{{}, BoundarySource::hac, refs[k].duration_ms};
      HacStop stop;
      stop.distance_threshold = thr;
      for (long e : hac_edges(merges[k], features[k].num_frames(), stop)) {
        const double t = transition_time_ms(e, features[k].frame_shift_ms);
        if (t < refs[k].duration_ms) out.times_ms.push_back(t);
      }
      return out;
    };
    const std::vector<double> thresholds =
        req.threshold ? std::vector<double>{*req.threshold} : quantile_thresholds(pooled, num_thresholds);
    const auto res = sweep(refs, thresholds, hyp_at, opts);
    outcome.best = res.best_point().result;
    outcome.best_threshold = res.best_point().threshold;
    if (!req.threshold) outcome.curve = res.points;
  } else if (det.kind == DetectorKind::interp && !det.weight) {
    const auto grid = config.at("segment").at("w_grid").get<std::vector<double>>();
    if (grid.empty()) throw ConfigError("segment.w_grid is empty");
    const auto both = rpm_signals(*model, det.gate, features, config, true);
    bool first = true;
    for (double w : grid) {
      auto signals = mix(both, w);
      const auto res = run_signals(signals);
      if (!req.threshold) write_pr_curve(req.out_dir / ("pr_curve_w" + format_weight(w) + ".csv"), res.points);
      if (first || res.best_point().result.r_value > outcome.best.r_value) {
        first = false;
        outcome.best = res.best_point().result;
        outcome.best_threshold = res.best_point().threshold;
        outcome.best_weight = w;
        outcome.curve = req.threshold ? std::vector<SweepPoint>{} : res.points;
        chosen_signals = std::move(signals);
      }
    }
  } else {
    chosen_signals = detector_signals(*model, det, features, config);
    const auto res = run_signals(chosen_signals);
    outcome.best = res.best_point().result;
    outcome.best_threshold = res.best_point().threshold;
    outcome.best_weight = det.weight;
    if (!req.threshold) outcome.curve = res.points;
  }

  if (!chosen_signals.empty()) {
    const BoundarySource src = det.kind == DetectorKind::gas   ? BoundarySource::gas
                               : det.kind == DetectorKind::rpm ? BoundarySource::rpm
                                                               : BoundarySource::interpolated;
    hyp_at = [&chosen_signals, &refs, src](double thr, std::size_t k) {
      return peak_pick(chosen_signals[k], thr, refs[k].duration_ms, src);
    };
    ensure_dir(req.out_dir / "signals");
    for (std::size_t k = 0; k < chosen_signals.size(); ++k)
      write_signal_csv(req.out_dir / "signals" / (manifest.utterances[k].id + ".csv"), chosen_signals[k]);
  }
  for (std::size_t k = 0; k < refs.size(); ++k)
    outcome.boundaries.emplace(manifest.utterances[k].id, hyp_at(outcome.best_threshold, k));

  json meta = {{"version", std::string(version_string())},
               {"config", config},
               {"detector", det.label()},
               {"threshold", outcome.best_threshold},
               {"weight", outcome.best_weight ? json(*outcome.best_weight) : json(nullptr)},
               {"edge_policy", {{"exclude_edges", opts.exclude_edges}, {"tolerance_ms", opts.tolerance_ms}}}};
  write_boundary_file(req.out_dir / "boundaries.json", outcome.boundaries, meta);
  if (!outcome.curve.empty()) write_pr_curve(req.out_dir / "pr_curve.csv", outcome.curve);

  json run = meta;
  run["mode"] = req.threshold ? "threshold" : "sweep";
  run["corpus_dir"] = fs::absolute(req.corpus_dir).string();
  run["checkpoint"] = req.checkpoint ? json(fs::absolute(*req.checkpoint).string()) : json(nullptr);
  run["architecture"] = model ? json(std::string(to_string(model->config.architecture))) : json(nullptr);
  run["corpus_config"] = manifest.config;
  run["best"] = result_json(outcome.best);
  write_json(req.out_dir / "run.json", run);
  return outcome;
}

EvalResult evaluate_files(const json& config, const fs::path& manifest_file, const fs::path& boundary_file,
                          const fs::path& out_csv) {
  const auto manifest = read_manifest(manifest_file);
  const auto hyps = read_boundary_file(boundary_file, manifest);
  CorpusBoundaries refs;
  const auto ref_list = reference_boundaries(manifest);
  for (std::size_t k = 0; k < ref_list.size(); ++k) refs.emplace(manifest.utterances[k].id, ref_list[k]);
  const EvalResult r = evaluate_corpus(refs, hyps, eval_options(config));
  const json doc = read_json(boundary_file);
  const std::string model = doc.contains("detector") ? doc["detector"].get<std::string>() : "hypothesis";
  const std::vector<ResultRow> rows{{model, condition_of(manifest.config.value("corpus", json())), r}};
  if (out_csv.has_parent_path()) ensure_dir(out_csv.parent_path());
  write_results_csv(out_csv, rows);
  return r;
}

PlotDataReport plotdata(const fs::path& run_dir, int max_utterances) {
  const fs::path run_file = run_dir / "run.json";
  if (!fs::exists(run_file)) throw DataError("missing run artifacts: " + run_file.string());
  const json run = read_json(run_file);
  const json config = resolve_config(run.at("config"));
  const fs::path corpus_dir = run.at("corpus_dir").get<std::string>();
  const auto manifest = read_manifest(manifest_path(corpus_dir));
  const auto features = load_corpus_features(corpus_dir, manifest);
  const auto refs = reference_boundaries(manifest);
  const auto hyps = read_boundary_file(run_dir / "boundaries.json", manifest);
  const DetectorSpec det = parse_detector(run.at("detector").get<std::string>());
  const fs::path plot_dir = run_dir / "plot";
  ensure_dir(plot_dir);
  PlotDataReport report;

  const std::size_t n = max_utterances < 0 ? features.size()
                                           : std::min(features.size(), static_cast<std::size_t>(max_utterances));
  if (!run.at("checkpoint").is_null()) {
    const auto model = load(run.at("checkpoint").get<std::string>());
    const GateTag gate = det.kind == DetectorKind::gas || det.kind == DetectorKind::interp
                             ? det.gate
                             : (model.config.cell == CellType::gru ? GateTag::gru_update : GateTag::lstm_forget);
    const int layer = get<int>(config, "segment", "gas_layer");
    for (std::size_t k = 0; k < n; ++k) {
      const auto fwd = forward_sequence(model.network, features[k].frames, {gate});
      const GasSeries g = mean_gas(pick_trace(fwd.traces, gate, layer));
      std::ofstream out(plot_dir / ("gas_" + manifest.utterances[k].id + ".csv"));
      out.precision(17);
      out << "frame_index,mean";
      for (Eigen::Index j = 0; j < g.per_unit.cols(); ++j) out << ",unit_" << j;
      out << '\n';
      for (Eigen::Index t = 0; t < g.per_unit.rows(); ++t) {
        out << t << ',' << g.mean_values(t);
        for (Eigen::Index j = 0; j < g.per_unit.cols(); ++j) out << ',' << g.per_unit(t, j);
        out << '\n';
      }
      ++report.gas_files;
    }
    if (det.kind != DetectorKind::hac && det.kind != DetectorKind::periodic) {
      const double w = run.at("weight").is_null() ? 0.0 : run.at("weight").get<double>();
      DetectorSpec fixed = det;
      if (det.kind == DetectorKind::interp) fixed.weight = w;
      const auto signals =
          detector_signals(model, fixed, std::span<const FeatureSequence>(features.data(), n), config);
      for (std::size_t k = 0; k < n; ++k) {
        const auto& id = manifest.utterances[k].id;
        const auto& s = signals[k];
        std::set<long> ref_idx, hyp_idx;
        for (double t : refs[k].times_ms) ref_idx.insert(std::lround(t / s.frame_shift_ms) - 1);
        for (double t : hyps.at(id).times_ms) hyp_idx.insert(std::lround(t / s.frame_shift_ms) - 1);
        std::ofstream out(plot_dir / ("signal_" + id + ".csv"));
        out.precision(17);
        out << "transition_index,time_ms,signal_value,ref_boundary,hyp_boundary\n";
        for (Eigen::Index t = 0; t < s.values.size(); ++t)
          out << t << ',' << transition_time_ms(t, s.frame_shift_ms) << ',' << s.values(t) << ','
              << ref_idx.count(t) << ',' << hyp_idx.count(t) << '\n';
        ++report.signal_files;
      }
    }
  }

  const fs::path curve = run_dir / "pr_curve.csv";
  if (fs::exists(curve)) {
    std::ifstream in(curve);
    std::string header, line;
    std::getline(in, header);
    std::vector<std::pair<double, std::string>> rows;
    while (std::getline(in, line))
      if (!line.empty()) rows.emplace_back(std::stod(line.substr(0, line.find(','))), line);
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::ofstream out(plot_dir / "pr_curve.csv");
    out << header << '\n';
    for (const auto& r : rows) out << r.second << '\n';
    report.pr_curve = true;
  }
  return report;
}

std::vector<ResultRow> sweep_report(std::span<const fs::path> run_dirs, const fs::path& out_csv) {
  std::vector<ResultRow> rows;
  for (const auto& dir : run_dirs) {
    const fs::path run_file = dir / "run.json";
    if (!fs::exists(run_file)) throw DataError("missing run artifacts: " + run_file.string());
    const json run = read_json(run_file);
    try {
      std::string model = run.at("detector").get<std::string>();
      if (!run.at("architecture").is_null()) model = run["architecture"].get<std::string>() + " " + model;
      rows.push_back({model, condition_of(run.at("corpus_config").value("corpus", json())),
                      result_from_json(run.at("best"))});
    } catch (const json::exception& ex) {
      throw DataError("malformed run file " + run_file.string() + ": " + ex.what());
    }
  }
  if (out_csv.has_parent_path()) ensure_dir(out_csv.parent_path());
  write_results_csv(out_csv, rows);
  return rows;
}

}  // namespace gasseg
