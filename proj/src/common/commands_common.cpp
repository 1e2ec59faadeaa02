// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include <cstdio>
#include <sstream>

#include "carat/commands.hpp"
#include "carat/error.hpp"

namespace carat {

SplitDatasets load_splits(const RunConfig& cfg) {
  if (!cfg.uses_dataset_files()) return generate_dataset(cfg.synth);
  SplitDatasets s;
  s.train = load_dataset(cfg.split_path("train"));
  s.val = load_dataset(cfg.split_path("val"));
  s.test = load_dataset(cfg.split_path("test"));
  for (const Dataset* d : {&s.val, &s.test}) {
    if (d->header.num_labels != s.train.header.num_labels || d->header.seq_len != s.train.header.seq_len ||
        d->header.dims != s.train.header.dims) {
      throw InputError("dataset split " + d->header.split + " disagrees with the training split's shapes");
    }
  }
  return s;
}

void gen_data(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  const SplitDatasets s = generate_dataset(spec);
  save_dataset(s.train, out_dir / "train.jsonl");
  save_dataset(s.val, out_dir / "val.jsonl");
  save_dataset(s.test, out_dir / "test.jsonl");
}

RunConfig tiny_gradcheck_config() {
  RunConfig cfg = RunConfig::from_preset("desk");
  cfg.seed = 1;
  cfg.precision = Precision::verify;
  cfg.model.d = 8;
  cfg.model.d_z = 4;
  cfg.model.heads = 2;
  cfg.model.ffn_mult = 2;
  cfg.model.layers = {1, 1, 1};
  cfg.contrastive.queue_capacity = 16;
  cfg.train.batch = 2;
  cfg.synth.n_train = 2;
  cfg.synth.n_val = 2;
  cfg.synth.n_test = 2;
  cfg.synth.num_labels = 3;
  cfg.synth.seq_len = {5, 5, 5};
  cfg.synth.dims = {4, 3, 5};
  return cfg;
}

std::vector<std::pair<std::string, AblationConfig>> ablation_variants() {
  std::vector<std::pair<std::string, AblationConfig>> v;
  auto push = [&](std::string label, auto&& set) {
    AblationConfig a;
    set(a);
    v.emplace_back(std::move(label), a);
  };
  push("(1) MRM + AGG", [](AblationConfig& a) { a.use_mrm_agg_only = true; });
  push("(2) only MRM", [](AblationConfig& a) { a.use_mrm_only = true; });
  push("(3) only AGG", [](AblationConfig& a) { a.use_agg_only = true; });
  push("(4) w/o L_scl", [](AblationConfig& a) { a.disable_scl = true; });
  push("(5) w/o En,De", [](AblationConfig& a) { a.disable_en_de = true; });
  push("(6) w/o L_rec", [](AblationConfig& a) { a.disable_rec_loss = true; });
  push("(7) w/o alpha-recon", [](AblationConfig& a) { a.disable_alpha_recon = true; });
  push("(8) w/o beta-recon", [](AblationConfig& a) { a.disable_beta_recon = true; });
  push("(9) w/o alpha&beta-recon", [](AblationConfig& a) {
    a.disable_alpha_recon = true;
    a.disable_beta_recon = true;
  });
  push("(10) w/o sw-shf", [](AblationConfig& a) { a.disable_sws = true; });
  push("(11) w/o mw-shf", [](AblationConfig& a) { a.disable_mws = true; });
  push("(12) w/o shf", [](AblationConfig& a) {
    a.disable_sws = true;
    a.disable_mws = true;
  });
  push("(13) full model", [](AblationConfig&) {});
  return v;
}

bool GradcheckOutcome::passed() const {
  for (const auto& r : rows) {
    if (!r.passed) return false;
  }
  return !rows.empty();
}

std::string GradcheckOutcome::to_text() const {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %14s %10s  %s\n", "component", "max_rel_err", "checked", "result");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-12s %14.3e %10zu  %s\n", r.component.c_str(), r.max_rel_error, r.checked,
                  r.passed ? "PASS" : "FAIL");
    out << buf;
    if (!r.passed && !r.detail.empty()) out << "  " << r.detail << '\n';
  }
  std::snprintf(buf, sizeof buf, "rel_tol %.1e, %.2f s, %s\n", rel_tol, seconds, passed() ? "all passed" : "FAILED");
  out << buf;
  return out.str();
}

namespace {

template <class F>
double mean_of(const std::vector<MetricsReport>& runs, F f) {
  if (runs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : runs) s += f(r);
  return s / static_cast<double>(runs.size());
}

}  // namespace

double ComparisonRow::mean_acc() const { return mean_of(runs, [](const MetricsReport& r) { return r.acc; }); }
double ComparisonRow::mean_precision() const {
  return mean_of(runs, [](const MetricsReport& r) { return r.precision; });
}
double ComparisonRow::mean_recall() const { return mean_of(runs, [](const MetricsReport& r) { return r.recall; }); }
double ComparisonRow::mean_f1() const { return mean_of(runs, [](const MetricsReport& r) { return r.micro_f1; }); }

std::string ComparisonTable::to_text() const {
  std::ostringstream out;
  char buf[256];
  out << title << '\n';
  std::snprintf(buf, sizeof buf, "%-28s %8s %8s %8s %9s %5s\n", "variant", "Acc", "P", "R", "Micro-F1", "runs");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-28s %8.4f %8.4f %8.4f %9.4f %5zu\n", r.label.c_str(), r.mean_acc(),
                  r.mean_precision(), r.mean_recall(), r.mean_f1(), r.runs.size());
    out << buf;
  }
  return out.str();
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream out;
  out << "variant,acc,precision,recall,micro_f1,runs\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "\"%s\",%.6f,%.6f,%.6f,%.6f,%zu\n", r.label.c_str(), r.mean_acc(),
                  r.mean_precision(), r.mean_recall(), r.mean_f1(), r.runs.size());
    out << buf;
  }
  return out.str();
}

nlohmann::json ComparisonTable::to_json() const {
  nlohmann::json j;
  j["title"] = title;
  auto& rs = j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& m : r.runs) runs.push_back(m.to_json());
    rs.push_back({{"label", r.label},
                  {"acc", r.mean_acc()},
                  {"precision", r.mean_precision()},
                  {"recall", r.mean_recall()},
                  {"micro_f1", r.mean_f1()},
                  {"runs", std::move(runs)}});
  }
  return j;
}

const ComparisonRow& ComparisonTable::row(std::string_view label) const {
  for (const auto& r : rows) {
    if (r.label == label) return r;
  }
  throw InputError("no row labelled " + std::string(label));
}

}  // namespace carat
