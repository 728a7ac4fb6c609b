// Copyright 2026 The Privleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: benchmark simulation, metric reports, SemSim
// training, correlation summaries, leave-one-out runs and the annotation
// service.

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "privleak/annotation_store.hpp"
#include "privleak/attack_sim.hpp"
#include "privleak/harness.hpp"
#include "privleak/semsim.hpp"
#include "privleak/annotation_server.hpp"

namespace fs = std::filesystem;
using namespace privleak;

namespace {

std::vector<AnnotationServer*> g_servers;

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  detail::write_file(path, j.dump(2) + "\n");
}

std::map<std::string, std::string> load_classes(const fs::path& path) {
  const auto j = nlohmann::json::parse(detail::read_file(path));
  return j.get<std::map<std::string, std::string>>();
}

ProxyThresholds thresholds_from(const fs::path& models_config) {
  ProxyThresholds t;
  const auto j = nlohmann::json::parse(detail::read_file(models_config));
  if (j.is_object() && j.contains("proxy_thresholds")) {
    const auto& pt = j["proxy_thresholds"];
    t.max_blur_sigma = pt.value("max_blur_sigma", t.max_blur_sigma);
    t.max_noise_sigma = pt.value("max_noise_sigma", t.max_noise_sigma);
  }
  return t;
}

// Looks up externally supplied per-pair distances by reconstruction image.
EvalContext::ExternalFn external_lookup(const Benchmark& bench) {
  auto table = std::make_shared<std::map<const Image*, double>>();
  for (const auto& [model, recs] : bench.models) {
    for (const auto& r : recs) {
      if (r.external_distance) (*table)[r.image.get()] = *r.external_distance;
    }
  }
  return [table](const Image&, const Image& recon) {
    const auto it = table->find(&recon);
    if (it == table->end()) fail(ErrorCode::kIncomplete, "reconstruction has no external_distance");
    return it->second;
  };
}

bool has_proxy_labels(const Benchmark& bench) {
  for (const auto& [model, recs] : bench.models) {
    for (const auto& r : recs) {
      if (!r.proxy_label) return false;
    }
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy leakage assessment toolkit"};
  app.require_subcommand(1);

  // synth-corpus
  auto* synth = app.add_subcommand("synth-corpus", "Write a constant-plus-texture image corpus");
  std::string synth_out;
  int synth_count = 50, synth_w = 32, synth_h = 32, synth_c = 1;
  std::uint64_t synth_seed = 0;
  std::string synth_prefix = "img";
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of images");
  synth->add_option("--width", synth_w, "Image width");
  synth->add_option("--height", synth_h, "Image height");
  synth->add_option("--channels", synth_c, "1 or 3");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--prefix", synth_prefix, "Image id prefix");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Generate a pseudo-model reconstruction benchmark");
  std::string sim_originals, sim_models, sim_out;
  std::uint64_t sim_seed = 0;
  simulate->add_option("--originals", sim_originals, "Directory of original images")->required();
  simulate->add_option("--models", sim_models, "Pseudo-model JSON config")->required();
  simulate->add_option("--out", sim_out, "Benchmark output directory")->required();
  simulate->add_option("--seed", sim_seed, "Seed mixed into every model seed");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Score every model of a benchmark");
  std::string met_bench, met_list = "mse,psnr,ssim,fid", met_net, met_out, met_annotations;
  metrics->add_option("--benchmark", met_bench, "Benchmark directory")->required();
  metrics->add_option("--metrics", met_list, "Comma-separated: mse,psnr,ssim,fid,semsim,external");
  metrics->add_option("--net", met_net, "SemSim network file (required for semsim)");
  metrics->add_option("--annotations", met_annotations, "Annotation journal/snapshot for a human_fraction column");
  metrics->add_option("--out", met_out, "Report CSV")->required();

  // train-semsim
  auto* trainc = app.add_subcommand("train-semsim", "Train SemSim from labeled benchmarks");
  std::vector<std::string> tr_bench, tr_labels{"proxy"};
  std::string tr_config, tr_out, tr_history;
  trainc->add_option("--benchmark", tr_bench, "Benchmark directories")->required()->expected(1, -1);
  trainc->add_option("--labels", tr_labels, "proxy | annotations FILE")->expected(1, 2);
  trainc->add_option("--config", tr_config, "Training config JSON")->required();
  trainc->add_option("--out", tr_out, "Network output file")->required();
  trainc->add_option("--history", tr_history, "Optional JSON file for per-epoch losses");

  // correlate
  auto* corr = app.add_subcommand("correlate", "Correlate report metrics with a reference");
  std::string co_report, co_reference = "proxy", co_out;
  corr->add_option("--report", co_report, "Report CSV")->required();
  corr->add_option("--reference", co_reference, "proxy | annotations")
      ->check(CLI::IsMember({"proxy", "annotations"}));
  corr->add_option("--out", co_out, "Correlation JSON")->required();

  // loo
  auto* loo = app.add_subcommand("loo", "Leave-one-out SemSim evaluation over benchmarks");
  std::vector<std::string> loo_sets;
  std::string loo_config, loo_out, loo_metrics = "mse,psnr,ssim,fid";
  loo->add_option("--datasets", loo_sets, "Benchmark directories")->required()->expected(2, -1);
  loo->add_option("--config", loo_config, "Training config JSON")->required();
  loo->add_option("--metrics", loo_metrics, "Hand-crafted metrics to compare");
  loo->add_option("--out", loo_out, "Output directory")->required();

  // serve-annotations
  auto* serve = app.add_subcommand("serve-annotations", "Run the annotation HTTP service");
  std::string sv_bench, sv_journal, sv_mode = "pair", sv_classes, sv_static, sv_host = "0.0.0.0";
  std::string sv_annotators;
  int sv_port = 8080;
  double sv_decoy = 0.2;
  std::uint64_t sv_seed = 0;
  serve->add_option("--benchmark", sv_bench, "Benchmark directory")->required();
  serve->add_option("--port", sv_port, "Port");
  serve->add_option("--journal", sv_journal, "Journal file (JSONL)")->required();
  serve->add_option("--mode", sv_mode, "pair | class_list")->check(CLI::IsMember({"pair", "class_list"}));
  serve->add_option("--classes", sv_classes, "JSON map image_id -> class (class_list mode)");
  serve->add_option("--decoy-rate", sv_decoy, "Decoy injection rate for pair tasks");
  serve->add_option("--seed", sv_seed, "Seed for decoys and candidate lists");
  serve->add_option("--annotators", sv_annotators, "Comma-separated closed annotator list");
  serve->add_option("--static", sv_static, "Directory served at /");
  serve->add_option("--host", sv_host, "Bind address");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      save_image_dir(synth_out, smooth_corpus(synth_count, synth_w, synth_h, synth_c, synth_seed, synth_prefix));
    } else if (*simulate) {
      auto models = load_models_config(sim_models);
      for (auto& m : models) m.seed ^= mix_seed(sim_seed);
      const auto bench = generate_benchmark(load_image_dir(sim_originals), models, thresholds_from(sim_models));
      write_benchmark(sim_out, bench);
    } else if (*metrics) {
      const auto bench = read_benchmark(met_bench);
      const auto list = parse_metric_list(met_list);
      EvalContext ctx;
      EmbeddingNet net;
      if (!met_net.empty()) {
        net = load_net(met_net);
        ctx.net = &net;
      }
      ctx.external = external_lookup(bench);
      std::map<std::string, ReferenceScores> refs;
      if (has_proxy_labels(bench)) refs[std::string(kProxyReference)] = proxy_reference(bench);
      if (!met_annotations.empty()) {
        const auto store = AnnotationStore::read_any(met_annotations);
        ReferenceScores human;
        for (const auto& [model, recs] : bench.models) human[model] = store->human_leakage_score(model).recognizable_fraction;
        refs[std::string(kHumanReference)] = human;
      }
      const auto report = build_report(bench, list, ctx, refs);
      detail::write_file(met_out, report_csv(report));
    } else if (*trainc) {
      const auto cfg = load_train_config(tr_config);
      std::unique_ptr<AnnotationStore> store;
      if (tr_labels.at(0) == "annotations") {
        if (tr_labels.size() != 2) fail(ErrorCode::kConfiguration, "--labels annotations needs a FILE");
        store = AnnotationStore::read_any(tr_labels[1]);
      } else if (tr_labels.at(0) != "proxy" || tr_labels.size() != 1) {
        fail(ErrorCode::kConfiguration, "--labels must be 'proxy' or 'annotations FILE'");
      }
      std::vector<Triplet> triplets;
      std::size_t skipped = 0;
      for (const auto& dir : tr_bench) {
        LabeledDataset ds;
        ds.name = dir;
        ds.bench = read_benchmark(dir);
        ds.labels = store ? store->majority_labels() : proxy_labels(ds.bench);
        auto t = dataset_triplets(ds);
        skipped += t.skipped;
        triplets.insert(triplets.end(), t.triplets.begin(), t.triplets.end());
      }
      std::cerr << triplets.size() << " triplets, " << skipped << " originals skipped\n";
      const auto result = train(triplets, cfg);
      save_net(tr_out, result.net);
      if (!tr_history.empty()) write_json(tr_history, {{"epoch_loss", result.epoch_loss}});
    } else if (*corr) {
      const std::string ref = co_reference == "proxy" ? std::string(kProxyReference) : std::string(kHumanReference);
      auto report = parse_report_csv(detail::read_file(co_report), ref);
      report.compute_correlations();
      write_json(co_out, correlations_json(report));
    } else if (*loo) {
      const auto cfg = load_train_config(loo_config);
      std::vector<LabeledDataset> sets;
      for (const auto& dir : loo_sets) {
        LabeledDataset ds;
        ds.name = fs::path(dir).filename().string();
        if (ds.name.empty()) ds.name = fs::path(dir).parent_path().filename().string();
        ds.bench = read_benchmark(dir);
        ds.labels = proxy_labels(ds.bench);
        sets.push_back(std::move(ds));
      }
      const auto folds = leave_one_out(sets, cfg, parse_metric_list(loo_metrics));
      nlohmann::ordered_json summary = nlohmann::ordered_json::array();
      int failed = 0;
      for (const auto& f : folds) {
        nlohmann::ordered_json entry = {{"held_out", f.held_out}, {"train_triplets", f.train_triplets}};
        if (f.report) {
          detail::write_file(fs::path(loo_out) / (f.held_out + ".csv"), report_csv(*f.report));
          entry["correlations"] = correlations_json(*f.report);
          entry["epoch_loss"] = f.epoch_loss;
        } else {
          entry["error"] = f.error;
          ++failed;
          std::cerr << "fold " << f.held_out << ": " << f.error << "\n";
        }
        summary.push_back(entry);
      }
      write_json(fs::path(loo_out) / "loo.json", summary);
      return failed == 0 ? 0 : 3;
    } else if (*serve) {
      const auto bench = read_benchmark(sv_bench);
      const auto mode = parse_mode(sv_mode);
      const auto classes = sv_classes.empty() ? std::map<std::string, std::string>{} : load_classes(sv_classes);
      StoreOptions opts;
      opts.decoy_rate = sv_decoy;
      opts.seed = sv_seed;
      opts.open_registration = sv_annotators.empty();
      auto store = AnnotationStore::open(sv_journal, tasks_from_benchmark(bench, mode, classes, sv_seed), opts);
      if (!sv_annotators.empty()) {
        std::stringstream ss(sv_annotators);
        std::string a;
        while (std::getline(ss, a, ',')) {
          if (!a.empty()) store->register_annotator(a);
        }
      }
      AnnotationServer server(*store, sv_bench);
      if (!sv_static.empty() && !server.mount_static(sv_static)) {
        fail(ErrorCode::kIo, "cannot serve static directory " + sv_static);
      }
      g_servers.push_back(&server);
      std::signal(SIGINT, [](int) { for (auto* s : g_servers) s->stop(); });
      std::signal(SIGTERM, [](int) { for (auto* s : g_servers) s->stop(); });
      std::cerr << "serving annotations on " << sv_host << ":" << sv_port << "\n";
      if (!server.listen(sv_host, sv_port)) fail(ErrorCode::kIo, "cannot listen on port " + std::to_string(sv_port));
      // Clean shutdown: full-state snapshot next to the journal.
      store->write_snapshot(sv_journal + ".snapshot.json");
    }
  } catch (const Error& e) {
    std::cerr << "privleak: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "privleak: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
