#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "loom/analysis.hpp"
#include "loom/compiler.hpp"
#include "loom/executor.hpp"
#include "loom/interpreter.hpp"
#include "loom/json_io.hpp"
#include "loom/programs.hpp"
#include "loom/training.hpp"
#include "loom/validate.hpp"

namespace {

// Exit codes: 0 success, 2 usage, 3 validation, 4 runtime, 5 I/O.
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;
constexpr int kExitIo = 5;

struct CliError : std::runtime_error {
  int code;
  CliError(int code, const std::string& what)
      : std::runtime_error(what), code(code) {}
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError(kExitIo, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw CliError(kExitIo, "cannot write " + path);
  out << text;
}

loom::ProgramBundle load_program(const std::string& name_or_path) {
  const auto& names = loom::program_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    return loom::make_program(name_or_path);
  }
  loom::ProgramBundle b;
  b.name = name_or_path;
  b.spec = loom::spec_from_string(read_file(name_or_path));
  loom::require_valid(b.spec);
  return b;
}

std::vector<int> parse_input(const loom::ProgramBundle& bundle,
                             const std::string& text, bool raw_ids) {
  if (!raw_ids && bundle.tokenize) return bundle.tokenize(text);
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

struct BatchExample {
  std::int64_t example_id;
  std::vector<int> input_ids;
};

std::vector<BatchExample> load_batch(const std::string& path) {
  std::vector<BatchExample> out;
  std::istringstream lines(read_file(path));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    out.push_back({j.at("example_id").get<std::int64_t>(),
                   j.at("input_ids").get<std::vector<int>>()});
  }
  return out;
}

std::string ids_to_csv(const std::vector<int>& ids) {
  std::string s;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(ids[i]);
  }
  return s;
}

std::optional<double> env_double(const char* name) {
  const char* v = std::getenv(name);
  if (!v) return std::nullopt;
  return std::atof(v);
}

std::optional<int> env_int(const char* name) {
  const char* v = std::getenv(name);
  if (!v) return std::nullopt;
  return std::atoi(v);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"symbolic transformer program toolkit"};
  app.require_subcommand(1);

  std::string program, input_text, trace_path, out_path, model_path;
  std::string inputs_path, config_path, traces_path;
  double lambda = env_double("LOOM_LAMBDA").value_or(100.0);
  int cli_max_layers = env_int("LOOM_MAX_LAYERS").value_or(-1);
  double alpha = 0.5, eps = 0.01;
  bool raw_ids = false;
  int jobs = 1;

  auto add_max_layers = [&](CLI::App* cmd) {
    cmd->add_option("--max-layers", cli_max_layers,
                    "layer bound (overrides program default)");
  };

  auto* interpret = app.add_subcommand("interpret", "run the interpreter");
  interpret->add_option("--program", program)->required();
  interpret->add_option("--input", input_text)->required();
  interpret->add_flag("--raw-ids", raw_ids, "treat input as raw token ids");
  interpret->add_option("--trace", trace_path, "write a JSONL trace here");
  add_max_layers(interpret);

  auto* compile_cmd = app.add_subcommand("compile", "compile to weights");
  compile_cmd->add_option("--program", program)->required();
  compile_cmd->add_option("--out", out_path)->required();
  compile_cmd->add_option("--lambda", lambda);

  auto* run_cmd = app.add_subcommand("run", "run compiled weights on a batch");
  run_cmd->add_option("--model", model_path)->required();
  run_cmd->add_option("--inputs", inputs_path)->required();
  run_cmd->add_option("--jobs", jobs);
  add_max_layers(run_cmd);

  auto* check = app.add_subcommand("check", "interpreter/executor agreement");
  check->add_option("--program", program)->required();
  check->add_option("--inputs", inputs_path)->required();
  check->add_option("--lambda", lambda);
  check->add_option("--jobs", jobs);
  add_max_layers(check);

  auto* minimize_cmd =
      app.add_subcommand("minimize", "drop rules unused on a dataset");
  minimize_cmd->add_option("--program", program)->required();
  minimize_cmd->add_option("--inputs", inputs_path)->required();
  minimize_cmd->add_option("--out", out_path)->required();

  auto* trace_cmd = app.add_subcommand("trace", "export traces for a batch");
  trace_cmd->add_option("--program", program)->required();
  trace_cmd->add_option("--inputs", inputs_path)->required();
  trace_cmd->add_option("--out", out_path)->required();

  auto* probe = app.add_subcommand("probe", "loss-landscape probes");
  probe->add_option("--program", program)->required();
  probe->add_option("--inputs", inputs_path)->required();
  probe->add_option("--alpha", alpha);
  probe->add_option("--eps", eps);

  auto* train = app.add_subcommand("train", "fit an MLP to trace pairs");
  train->add_option("--program", program)->required();
  train->add_option("--traces", traces_path)->required();
  train->add_option("--config", config_path)->required();
  train->add_option("--out", out_path)->required();

  auto* list = app.add_subcommand("list-programs", "print the registry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    std::optional<int> max_layers;
    if (cli_max_layers > 0) max_layers = cli_max_layers;

    if (*interpret) {
      auto bundle = load_program(program);
      auto ids = parse_input(bundle, input_text, raw_ids);
      loom::RunOptions opts;
      opts.max_layers = max_layers;
      opts.record_trace = !trace_path.empty();
      loom::RunResult r = loom::run(bundle.spec, ids, opts);
      if (!trace_path.empty()) {
        write_file(trace_path, loom::trace_to_jsonl(r.trace, bundle.spec));
      }
      if (!r.halted_all) {
        throw CliError(kExitRuntime,
                       "no halt within " +
                           std::to_string(r.layers_used) + " layers");
      }
      std::cout << ids_to_csv(r.outputs) << "\n";
    } else if (*compile_cmd) {
      auto bundle = load_program(program);
      loom::CompileOptions copts;
      copts.sharpness = lambda;
      auto weights = loom::compile(bundle.spec, copts);
      write_file(out_path, loom::serialize_weights(weights));
      std::cout << "d_model=" << weights.d_model
                << " rule_width=" << weights.rule_width()
                << " heads=" << weights.heads.size() << "\n";
    } else if (*run_cmd) {
      auto weights = loom::deserialize_weights(read_file(model_path));
      loom::Executor exec(weights);
      auto batch = load_batch(inputs_path);
      std::vector<std::string> results(batch.size());
      loom::ExecOptions eopts;
      eopts.max_layers = max_layers;
      for (size_t i = 0; i < batch.size(); ++i) {
        loom::ExecResult r = exec.run(batch[i].input_ids, eopts);
        nlohmann::json j;
        j["example_id"] = batch[i].example_id;
        j["output_ids"] = r.outputs;
        j["layers_used"] = r.layers_used;
        results[i] = j.dump();
      }
      for (const auto& line : results) std::cout << line << "\n";
    } else if (*check) {
      auto bundle = load_program(program);
      loom::CompileOptions copts;
      copts.sharpness = lambda;
      auto weights = loom::compile(bundle.spec, copts);
      auto batch = load_batch(inputs_path);
      std::vector<std::vector<int>> inputs;
      for (auto& b : batch) inputs.push_back(b.input_ids);
      auto report =
          loom::check_equivalence(bundle.spec, weights, inputs, false,
                                  max_layers);
      std::cout << report.matches << "/" << report.total << " match\n";
    } else if (*minimize_cmd) {
      auto bundle = load_program(program);
      auto batch = load_batch(inputs_path);
      std::vector<std::vector<int>> inputs;
      for (auto& b : batch) inputs.push_back(b.input_ids);
      auto coverage = loom::collect_coverage(bundle.spec, inputs);
      auto minimized = loom::minimize(bundle.spec, coverage);
      write_file(out_path, loom::spec_to_string(minimized));
      std::cout << "rules " << bundle.spec.rules.size() << " -> "
                << minimized.rules.size() << "\n";
    } else if (*trace_cmd) {
      auto bundle = load_program(program);
      auto batch = load_batch(inputs_path);
      std::string jsonl;
      for (const auto& ex : batch) {
        loom::RunOptions opts;
        opts.record_trace = true;
        opts.example_id = ex.example_id;
        loom::RunResult r = loom::run(bundle.spec, ex.input_ids, opts);
        jsonl += loom::trace_to_jsonl(r.trace, bundle.spec);
      }
      write_file(out_path, jsonl);
      std::cout << "wrote " << out_path << "\n";
    } else if (*probe) {
      auto bundle = load_program(program);
      auto batch = load_batch(inputs_path);
      std::vector<std::vector<int>> inputs;
      for (auto& b : batch) inputs.push_back(b.input_ids);
      auto data = loom::dataset_from_assignments(
          bundle.spec, loom::collect_mlp_inputs(bundle.spec, inputs));
      auto weights = loom::compile(bundle.spec);
      auto report = loom::perturbation_probe(
          loom::RuleLayerParams::from_weights(weights), data, alpha, eps);
      std::cout << loom::probe_to_json(report) << "\n";
    } else if (*train) {
      auto bundle = load_program(program);
      auto cfg = loom::train_config_from_file(config_path);
      auto dataset = loom::dataset_from_trace_jsonl(
          bundle.spec, read_file(traces_path), true);
      auto result = loom::train_mlp(dataset, cfg);
      write_file(out_path, loom::learned_mlp_to_json(result.mlp));
      write_file(out_path + ".loss.csv", loom::loss_curve_to_csv(result));
      std::cout << "final_mse=" << result.final_mse << "\n";
    } else if (*list) {
      for (const auto& name : loom::program_names()) {
        std::cout << name << "\n";
      }
    }
  } catch (const CliError& e) {
    nlohmann::json j{{"error", e.what()}, {"code", e.code}};
    std::cerr << j.dump() << "\n";
    return e.code;
  } catch (const std::invalid_argument& e) {
    nlohmann::json j{{"error", e.what()}, {"code", kExitValidation}};
    std::cerr << j.dump() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    nlohmann::json j{{"error", e.what()}, {"code", kExitRuntime}};
    std::cerr << j.dump() << "\n";
    return kExitRuntime;
  }
  return 0;
}
