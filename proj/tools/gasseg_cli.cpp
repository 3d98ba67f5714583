// gasseg: file-mediated pipeline driver.
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gasseg/pipeline.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

enum Exit { ok = 0, usage = 1, data = 2, numerical = 3 };

struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "Run configuration JSON file");
    app->add_option("--set", sets, "Override a config key, e.g. --set train.epochs=10 (value parsed as JSON)");
    app->add_option("--seed", seed, "Top-level seed");
  }

  json resolve(const std::map<std::string, json>& extra = {}) const {
    json user = config_file.empty() ? json::object() : gasseg::load_config_file(config_file);
    auto put = [&](const std::string& dotted, const json& value) {
      json* node = &user;
      std::size_t start = 0;
      for (std::size_t dot; (dot = dotted.find('.', start)) != std::string::npos; start = dot + 1) {
        node = &(*node)[dotted.substr(start, dot - start)];
        if (!node->is_object() && !node->is_null())
          throw gasseg::ConfigError("cannot override inside non-object key: " + dotted);
      }
      (*node)[dotted.substr(start)] = value;
    };
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw gasseg::ConfigError("--set expects key=value, got " + s);
      const std::string text = s.substr(eq + 1);
      json value = json::parse(text, nullptr, false);
      if (value.is_discarded()) value = text;
      put(s.substr(0, eq), value);
    }
    for (const auto& [k, v] : extra) put(k, v);
    if (seed) put("seed", *seed);
    return gasseg::resolve_config(user);
  }
};

void print_result(const gasseg::EvalResult& r) {
  std::cout << "precision=" << r.precision << " recall=" << r.recall << " f1=" << r.f1
            << " os=" << r.over_segmentation << " r_value=" << r.r_value << (r.degenerate ? " (degenerate)" : "")
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gate-activation-signal segmentation pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gasseg::version_string()));

  // synth
  ConfigFlags synth_cfg;
  std::string synth_out;
  std::optional<int> synth_n;
  std::optional<double> synth_snr;
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus (WAVs + manifest)");
  synth_cfg.attach(synth);
  synth->add_option("--out", synth_out, "Corpus directory")->required();
  synth->add_option("--num-utterances", synth_n, "corpus.num_utterances");
  synth->add_option("--snr-db", synth_snr, "corpus.snr_db (adds white noise)");

  // ingest
  ConfigFlags ingest_cfg;
  std::string ingest_root, ingest_out;
  std::optional<double> ingest_snr;
  auto* ingest = app.add_subcommand("ingest", "Build a manifest for a TIMIT-style tree");
  ingest_cfg.attach(ingest);
  ingest->add_option("--timit", ingest_root, "Root directory with *.wav and *.phn")->required();
  ingest->add_option("--out", ingest_out, "Corpus directory")->required();
  ingest->add_option("--snr-db", ingest_snr, "corpus.snr_db (writes noisy copies)");

  // featurize
  ConfigFlags feat_cfg;
  std::string feat_corpus;
  auto* featurize = app.add_subcommand("featurize", "Extract CMVN-normalized MFCC39 features");
  feat_cfg.attach(featurize);
  featurize->add_option("--corpus", feat_corpus, "Corpus directory")->required();

  // train
  ConfigFlags train_cfg;
  std::string train_corpus, train_out;
  std::optional<std::string> train_arch, train_cell;
  std::optional<int> train_epochs;
  std::optional<double> train_lr;
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cfg.attach(train);
  train->add_option("--corpus", train_corpus, "Corpus directory (featurized)")->required();
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--arch", train_arch, "model.architecture: ae_grnn, rpm_2layer, rpm_4layer");
  train->add_option("--cell", train_cell, "model.cell: lstm, gru");
  train->add_option("--epochs", train_epochs, "train.epochs");
  train->add_option("--lr", train_lr, "train.lr");

  // segment
  ConfigFlags seg_cfg;
  std::string seg_corpus, seg_out;
  std::optional<std::string> seg_checkpoint, seg_detector;
  std::optional<double> seg_threshold;
  auto* segment = app.add_subcommand("segment", "Detect boundaries (sweep thresholds unless --threshold)");
  seg_cfg.attach(segment);
  segment->add_option("--corpus", seg_corpus, "Corpus directory (featurized)")->required();
  segment->add_option("--out", seg_out, "Run directory")->required();
  segment->add_option("--checkpoint", seg_checkpoint, "Model checkpoint");
  segment->add_option("--detector", seg_detector, "gas:<gate> | rpm | interp[:w] | hac | periodic[:ms]");
  segment->add_option("--threshold", seg_threshold, "Fixed threshold (otherwise sweep)");

  // evaluate
  ConfigFlags eval_cfg;
  std::string eval_manifest, eval_boundaries, eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "Score a boundary file against a manifest");
  eval_cfg.attach(evaluate);
  evaluate->add_option("--manifest", eval_manifest, "Reference manifest.json")->required();
  evaluate->add_option("--boundaries", eval_boundaries, "boundaries.json")->required();
  evaluate->add_option("--out", eval_out, "Results CSV")->required();

  // plotdata
  std::string plot_run;
  int plot_max = -1;
  auto* plot = app.add_subcommand("plotdata", "Write plot-ready CSVs for a segment run");
  plot->add_option("--run", plot_run, "Run directory")->required();
  plot->add_option("--max-utterances", plot_max, "Limit per-utterance files (-1: all)");

  // sweep-report
  std::vector<std::string> report_runs;
  std::string report_out;
  auto* report = app.add_subcommand("sweep-report", "Summarize the best result of several runs");
  report->add_option("--out", report_out, "Summary CSV")->required();
  report->add_option("runs", report_runs, "Run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? Exit::ok : Exit::usage;
  }

  try {
    if (*synth) {
      std::map<std::string, json> extra;
      if (synth_n) extra["corpus.num_utterances"] = *synth_n;
      if (synth_snr) extra["corpus.snr_db"] = *synth_snr;
      const auto m = gasseg::synth_to_dir(synth_cfg.resolve(extra), synth_out);
      std::cout << "wrote " << m.utterances.size() << " utterances to " << synth_out << '\n';
    } else if (*ingest) {
      std::map<std::string, json> extra;
      if (ingest_snr) extra["corpus.snr_db"] = *ingest_snr;
      const auto m = gasseg::ingest_timit(ingest_cfg.resolve(extra), ingest_root, ingest_out);
      std::cout << "indexed " << m.utterances.size() << " utterances into " << ingest_out << '\n';
    } else if (*featurize) {
      const auto r = gasseg::featurize_corpus(feat_corpus, gasseg::frame_config(feat_cfg.resolve()));
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "computed=" << r.computed << " cached=" << r.cached << " repaired=" << r.repaired << '\n';
    } else if (*train) {
      std::map<std::string, json> extra;
      if (train_arch) extra["model.architecture"] = *train_arch;
      if (train_cell) extra["model.cell"] = *train_cell;
      if (train_epochs) extra["train.epochs"] = *train_epochs;
      if (train_lr) extra["train.lr"] = *train_lr;
      const auto r = gasseg::train_to_checkpoint(train_cfg.resolve(extra), train_corpus, train_out);
      if (!r.loss_history.empty())
        std::cout << "epoch 1 loss=" << r.loss_history.front() << " final loss=" << r.loss_history.back() << '\n';
      std::cout << "checkpoint " << train_out << '\n';
    } else if (*segment) {
      std::map<std::string, json> extra;
      if (seg_detector) extra["segment.detector"] = *seg_detector;
      const json config = seg_cfg.resolve(extra);
      gasseg::SegmentRequest req;
      if (seg_checkpoint) req.checkpoint = *seg_checkpoint;
      req.corpus_dir = seg_corpus;
      req.out_dir = seg_out;
      req.threshold = seg_threshold;
      if (const auto& t = config.at("segment").at("threshold"); !req.threshold && !t.is_null())
        req.threshold = t.get<double>();
      req.detector = gasseg::detector_from_config(config);
      const auto out = gasseg::segment_corpus(config, req);
      std::cout << req.detector.label() << " threshold=" << out.best_threshold;
      if (out.best_weight) std::cout << " w=" << *out.best_weight;
      std::cout << ' ';
      print_result(out.best);
    } else if (*evaluate) {
      print_result(gasseg::evaluate_files(eval_cfg.resolve(), eval_manifest, eval_boundaries, eval_out));
    } else if (*plot) {
      const auto r = gasseg::plotdata(plot_run, plot_max);
      std::cout << "gas=" << r.gas_files << " signal=" << r.signal_files << " pr_curve=" << r.pr_curve << '\n';
    } else if (*report) {
      std::vector<fs::path> dirs(report_runs.begin(), report_runs.end());
      const auto rows = gasseg::sweep_report(dirs, report_out);
      for (const auto& row : rows) {
        std::cout << row.model << " [" << row.condition << "] ";
        print_result(row.result);
      }
    }
  } catch (const gasseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return Exit::usage;
  } catch (const gasseg::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return Exit::data;
  } catch (const gasseg::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return Exit::numerical;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return Exit::usage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return Exit::data;
  }
  return Exit::ok;
}
