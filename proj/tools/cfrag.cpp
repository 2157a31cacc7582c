#include <cstdio>
#include <map>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "cfrag/config.hpp"
#include "cfrag/errors.hpp"
#include "cfrag/pipeline.hpp"
#include "cfrag/synthetic.hpp"

namespace {

struct ConfigArgs {
  std::string config_file;
  std::map<std::string, std::string> flag_values;
};

// Every PipelineConfig key becomes a --key flag; flags override file values.
void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_file, "flat key=value config file");
  for (const auto& [key, value] : cfrag::config::to_map(cfrag::config::PipelineConfig{})) {
    args.flag_values[key] = value;
    auto* opt = cmd->add_option("--" + key, args.flag_values[key]);
    opt->default_str(value);
  }
}

cfrag::config::PipelineConfig resolve_config(const CLI::App* cmd, const ConfigArgs& args) {
  cfrag::config::PipelineConfig config;
  if (!args.config_file.empty())
    cfrag::config::apply_overrides(config, cfrag::config::read_config_file(args.config_file));
  std::map<std::string, std::string> overrides;
  for (const auto& [key, value] : args.flag_values) {
    if (cmd->count("--" + key) > 0) overrides[key] = value;
  }
  cfrag::config::apply_overrides(config, overrides);
  cfrag::config::validate(config);
  return config;
}

void print_trace(const std::string& stage, const std::vector<double>& trace) {
  std::printf("%s loss:", stage.c_str());
  for (double v : trace) std::printf(" %.6f", v);
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cfrag: collaborative-filtering-augmented retrieval pipeline"};
  app.require_subcommand(1);

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "generate the clustered synthetic benchmark");
  cfrag::synthetic::SyntheticSpec spec;
  std::string synth_out = "synthetic.jsonl";
  std::uint64_t synth_seed = 17;
  synth->add_option("--out", synth_out, "dataset JSONL path (sidecar written next to it)");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--clusters", spec.clusters);
  synth->add_option("--users-per-cluster", spec.users_per_cluster);
  synth->add_option("--history-len", spec.history_len);
  synth->add_option("--samples-per-cluster", spec.samples_per_cluster);
  synth->add_option("--heldout-per-cluster", spec.heldout_per_cluster);
  synth->add_option("--evidence-copies", spec.evidence_copies);
  synth->add_option("--vocab-per-cluster", spec.vocab_per_cluster);
  synth->add_option("--filler-vocab", spec.filler_vocab);
  synth->add_option("--noise-vocab", spec.noise_vocab);
  synth->add_option("--query-topic-tokens", spec.query_topic_tokens);
  synth->add_option("--max-topic-overlap", spec.max_topic_overlap);
  synth->add_option("--doc-topic-tokens", spec.doc_topic_tokens);
  synth->add_option("--planted-filler-tokens", spec.planted_filler_tokens);
  synth->add_option("--decoy-filler-tokens", spec.decoy_filler_tokens);
  synth->add_option("--noise-sigma", spec.noise_sigma);

  // --- training/eval commands sharing config flags ---
  ConfigArgs train_user_args, train_retr_args, train_rrk_args, train_args, eval_args;
  auto* train_user = app.add_subcommand("train-user", "stage 1: contrastive user encoder");
  add_config_options(train_user, train_user_args);
  auto* train_retr = app.add_subcommand("train-retriever", "stage 2: retriever distillation");
  add_config_options(train_retr, train_retr_args);
  auto* train_rrk = app.add_subcommand("train-reranker", "stage 3: reranker distillation");
  add_config_options(train_rrk, train_rrk_args);
  auto* train = app.add_subcommand("train", "all three training stages");
  add_config_options(train, train_args);
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints with ablations");
  add_config_options(eval, eval_args);

  // --- report ---
  auto* report_cmd = app.add_subcommand("report", "summarize a report JSON");
  std::string report_path;
  report_cmd->add_option("--in", report_path, "report JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      std::mt19937_64 rng(synth_seed);
      auto data = cfrag::synthetic::generate_synthetic(spec, rng);
      data.oracle.seed = synth_seed;
      cfrag::corpus::save_dataset(data.dataset, synth_out);
      cfrag::synthetic::save_sidecar(data, synth_out + ".sidecar.json");
      std::printf("wrote %zu users, %zu samples (%zu train / %zu heldout) to %s\n",
                  data.dataset.profiles.size(), data.dataset.samples.size(),
                  data.train_sample_ids.size(), data.heldout_sample_ids.size(),
                  synth_out.c_str());
    } else if (train_user->parsed()) {
      print_trace("user", cfrag::pipeline::train_user_stage(resolve_config(train_user, train_user_args)));
    } else if (train_retr->parsed()) {
      print_trace("retriever",
                  cfrag::pipeline::train_retriever_stage(resolve_config(train_retr, train_retr_args)));
    } else if (train_rrk->parsed()) {
      print_trace("reranker",
                  cfrag::pipeline::train_reranker_stage(resolve_config(train_rrk, train_rrk_args)));
    } else if (train->parsed()) {
      auto report = cfrag::pipeline::run_train(resolve_config(train, train_args));
      for (const auto& [stage, trace] : report.loss_traces) print_trace(stage, trace);
    } else if (eval->parsed()) {
      auto report = cfrag::pipeline::run_eval(resolve_config(eval, eval_args));
      for (const auto& [name, v] : report.variants) {
        std::printf("%-18s score=%.4f hit=%.4f retr_top1=%.4f rrk_top1=%.4f chance=%.4f n=%zu\n",
                    name.c_str(), v.task_score, v.hit_rate, v.retriever_top1, v.reranker_top1,
                    v.chance, v.samples);
      }
    } else if (report_cmd->parsed()) {
      auto report = cfrag::pipeline::load_report(report_path);
      std::printf("seed=%llu\n", static_cast<unsigned long long>(report.seed));
      for (const auto& [stage, trace] : report.loss_traces) {
        if (!trace.empty())
          std::printf("%s: first=%.6f last=%.6f epochs=%zu\n", stage.c_str(), trace.front(),
                      trace.back(), trace.size());
      }
      for (const auto& [name, v] : report.variants) {
        std::printf("%-18s score=%.4f hit=%.4f retr_top1=%.4f rrk_top1=%.4f chance=%.4f n=%zu\n",
                    name.c_str(), v.task_score, v.hit_rate, v.retriever_top1, v.reranker_top1,
                    v.chance, v.samples);
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
