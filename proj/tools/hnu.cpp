// Command-line entry points: corpus generation, networks, labels, models,
// evaluation, simulated experiments, single hints and the HTTP service.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hnu/experiments.hpp"
#include "hnu/http.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path data_dir() {
  const char* env = std::getenv("HNU_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path("data");
}

std::string default_path(const std::string& name) { return (data_dir() / name).string(); }

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError("cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw CliError("malformed JSON in " + path);
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw CliError("cannot write " + path);
}

/// Problems from --problems, else data/problems.jsonl when present, else the
/// shipped set.
std::vector<hnu::Problem> load_problem_set(const std::string& path) {
  if (!path.empty()) return hnu::load_problems(path);
  const fs::path fallback = data_dir() / "problems.jsonl";
  if (fs::exists(fallback)) return hnu::load_problems(fallback.string());
  return hnu::shipped_problems();
}

bool parse_switch(const std::string& v) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw CliError("expected on or off, got '" + v + "'");
}

hnu::KeyMode parse_mode(const std::string& v) {
  auto m = hnu::parse_key_mode(v);
  if (!m) throw CliError("key mode must be ordered or unordered, got '" + v + "'");
  return *m;
}

struct Artifacts {
  hnu::NetworkLibrary lib;
  hnu::ThresholdTable t75;
};

Artifacts load_networks(const std::string& path) {
  json j = read_json(path);
  Artifacts a;
  a.lib = hnu::NetworkLibrary::from_json(j);
  if (j.contains("t75")) a.t75 = j["t75"].get<hnu::ThresholdTable>();
  return a;
}

std::string eval_text(const hnu::EvalReport& r) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(3);
  o << std::left << std::setw(10) << "split" << std::setw(13) << "classifier" << std::right << std::setw(8) << "n"
    << std::setw(9) << "recall" << std::setw(9) << "auc" << std::setw(9) << "fn" << std::setw(9) << "fp" << '\n';
  for (const hnu::EvalRow& row : r.rows)
    o << std::left << std::setw(10) << row.name << std::setw(13) << row.classifier << std::right << std::setw(8)
      << row.n << std::setw(9) << row.recall << std::setw(9) << row.auc << std::setw(9) << row.fn_rate
      << std::setw(9) << row.fp_rate << '\n';
  for (const auto& s : r.skipped) o << "skipped " << s << " (single class)\n";
  return o.str();
}

json eval_json(const hnu::EvalReport& r) {
  json rows = json::array();
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  for (const hnu::EvalRow& row : r.rows)
    rows.push_back({{"split", row.name},
                    {"classifier", row.classifier},
                    {"n", row.n},
                    {"recall", num(row.recall)},
                    {"auc", num(row.auc)},
                    {"fn_rate", num(row.fn_rate)},
                    {"fp_rate", num(row.fp_rate)}});
  return {{"rows", rows}, {"skipped", r.skipped}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive hints for propositional logic proofs"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string problems_path;
  std::uint64_t seed = 1;
  app.add_option("--problems", problems_path, "problem set (JSON lines)");
  app.add_option("--seed", seed, "master seed");

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "simulate students and write their traces");
  std::string gen_out = default_path("traces.jsonl"), gen_policy = "random:0.2", gen_sections = "training";
  std::size_t gen_students = 40;
  bool gen_shuffled = false;
  gen->add_option("--out", gen_out);
  gen->add_option("--students", gen_students);
  gen->add_option("--policy", gen_policy, "hint policy: random:p or control");
  gen->add_option("--sections", gen_sections, "training, all, pretest or posttest");
  gen->add_flag("--shuffled", gen_shuffled, "students follow shortest proofs in shuffled order");

  // build-network
  auto* build = app.add_subcommand("build-network", "build interaction networks from traces");
  std::string build_traces = default_path("traces.jsonl"), build_out = default_path("networks.json");
  std::string backup = "expected";
  build->add_option("--traces", build_traces);
  build->add_option("--out", build_out);
  build->add_option("--backup", backup, "expected or max");

  // label
  auto* label = app.add_subcommand("label", "label every step of a trace file");
  std::string label_traces = default_path("traces.jsonl"), label_nets = default_path("networks.json"), label_out = "-";
  std::string label_penalty = "off", label_mode = "unordered";
  label->add_option("--traces", label_traces);
  label->add_option("--networks", label_nets);
  label->add_option("--out", label_out);
  label->add_option("--penalty", label_penalty);
  label->add_option("--key-mode", label_mode);

  // train
  auto* train = app.add_subcommand("train", "train the HelpNeed predictor");
  std::string train_traces = default_path("traces.jsonl"), train_nets = default_path("networks.json");
  std::string train_out = default_path("model.json"), train_penalty = "on", train_mode = "unordered";
  train->add_option("--traces", train_traces);
  train->add_option("--networks", train_nets);
  train->add_option("--out", train_out);
  train->add_option("--penalty", train_penalty);
  train->add_option("--key-mode", train_mode);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "evaluate the predictor");
  std::string eval_traces = default_path("traces.jsonl"), eval_nets = default_path("networks.json");
  std::string protocol = "cv3", eval_penalty = "on", eval_mode = "unordered", eval_format = "text", eval_out = "-";
  std::string eval_test;
  eval->add_option("--traces", eval_traces);
  eval->add_option("--networks", eval_nets);
  eval->add_option("--protocol", protocol)->check(CLI::IsMember({"cv3", "holdout"}));
  eval->add_option("--test-traces", eval_test, "held-out traces for the holdout protocol");
  eval->add_option("--penalty", eval_penalty);
  eval->add_option("--key-mode", eval_mode);
  eval->add_option("--format", eval_format)->check(CLI::IsMember({"text", "json"}));
  eval->add_option("--out", eval_out);

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a seeded A/B experiment");
  std::string sim_policy, sim_penalty, sim_mode, sim_config, sim_out = "-", sim_format = "text", sim_traces;
  std::optional<std::size_t> sim_students;
  sim->add_option("--policy", sim_policy, "experimental condition: adaptive, control or random:p");
  sim->add_option("--penalty", sim_penalty);
  sim->add_option("--key-mode", sim_mode);
  sim->add_option("--config", sim_config, "experiment config (JSON)");
  sim->add_option("--students", sim_students);
  sim->add_option("--format", sim_format)->check(CLI::IsMember({"text", "json"}));
  sim->add_option("--out", sim_out);
  sim->add_option("--traces-out", sim_traces, "write the main cohort's traces");

  // hint
  auto* hint = app.add_subcommand("hint", "print the next-step hint for a state");
  std::string hint_problem, hint_nets;
  std::vector<std::string> hint_derived;
  hint->add_option("--problem", hint_problem)->required();
  hint->add_option("--networks", hint_nets);
  hint->add_option("--derived", hint_derived, "derived statements, in order");

  // serve
  auto* serve = app.add_subcommand("serve", "run the tutoring HTTP service");
  std::string serve_host = "127.0.0.1", serve_model, serve_nets, serve_log = default_path("sessions"), origin = "*";
  int port = 8080;
  serve->add_option("--host", serve_host);
  serve->add_option("--port", port);
  serve->add_option("--model", serve_model);
  serve->add_option("--networks", serve_nets);
  serve->add_option("--log-dir", serve_log);
  serve->add_option("--origin", origin, "allowed CORS origin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    const auto problems = load_problem_set(problems_path);

    if (*gen) {
      hnu::Workbench wb;
      std::vector<hnu::Problem> chosen;
      if (gen_sections == "all") {
        chosen = problems;
      } else {
        auto s = hnu::parse_section(gen_sections);
        if (!s) throw CliError("unknown section '" + gen_sections + "'");
        chosen = hnu::problems_in(problems, *s);
      }
      std::vector<hnu::TraceEvent> events;
      if (gen_shuffled) {
        events = hnu::shuffled_order_corpus(gen_students, seed, chosen, wb);
      } else {
        hnu::PolicyConfig policy = hnu::parse_policy(gen_policy);
        if (policy.kind == hnu::PolicyKind::kAdaptive) throw CliError("gen-corpus has no model; use random:p or control");
        hnu::AttemptSetup setup{&policy, nullptr, nullptr, nullptr, policy.kind != hnu::PolicyKind::kControl};
        events = hnu::simulate_cohort("corpus", gen_students, seed, hnu::ProfileDistribution{}, chosen, setup, wb).events;
      }
      std::ostringstream o;
      hnu::write_traces(events, o);
      write_text(gen_out, o.str());
    } else if (*build) {
      hnu::ValueIterationParams vi;
      if (backup == "max") vi.backup = hnu::Backup::kMax;
      else if (backup != "expected") throw CliError("backup must be expected or max");
      auto students = hnu::replay_students(hnu::load_traces(build_traces), problems);
      auto attempts = hnu::all_attempts(students);
      json j = hnu::NetworkLibrary::build(attempts, problems, vi).to_json();
      j["t75"] = hnu::duration_thresholds(attempts);
      write_text(build_out, j.dump() + "\n");
    } else if (*label) {
      const bool penalty = parse_switch(label_penalty);
      const hnu::KeyMode mode = parse_mode(label_mode);
      Artifacts a = load_networks(label_nets);
      std::ostringstream o;
      for (const hnu::StudentSteps& s : hnu::replay_students(hnu::load_traces(label_traces), problems))
        for (std::size_t k = 0; k < s.attempts.size(); ++k) {
          const hnu::Problem& p = *s.problems[k];
          const auto* net = a.lib.get(p.id, mode);
          if (!net) throw CliError("no network for problem " + p.id);
          auto t = a.t75.find(p.id);
          auto labels = hnu::label_attempt(s.attempts[k], *net, t == a.t75.end() ? INFINITY : t->second, penalty);
          for (std::size_t i = 0; i < labels.size(); ++i) {
            const auto& l = labels[i];
            o << json{{"student", s.student},
                      {"problem", p.id},
                      {"step", i},
                      {"behavior", std::string(hnu::behavior_name(l.behavior))},
                      {"helpneed", l.helpneed()},
                      {"long", l.long_step},
                      {"efficient", l.efficient},
                      {"progress", l.progress.as_features()}}
                     .dump()
              << '\n';
          }
        }
      write_text(label_out, o.str());
    } else if (*train) {
      hnu::ModelConfig config;
      config.penalty = parse_switch(train_penalty);
      config.key_mode = parse_mode(train_mode);
      config.forest.seed = seed;
      Artifacts a = load_networks(train_nets);
      auto students = hnu::replay_students(hnu::load_traces(train_traces), problems);
      auto examples = hnu::build_examples(students, a.lib, a.lib, a.t75, config.key_mode, config.penalty);
      write_text(train_out, hnu::HelpNeedModel::train(examples, config, a.t75).to_json().dump() + "\n");
    } else if (*eval) {
      hnu::ModelConfig config;
      config.penalty = parse_switch(eval_penalty);
      config.key_mode = parse_mode(eval_mode);
      config.forest.seed = seed;
      Artifacts a = load_networks(eval_nets);
      auto students = hnu::replay_students(hnu::load_traces(eval_traces), problems);
      auto examples = hnu::build_examples(students, a.lib, a.lib, a.t75, config.key_mode, config.penalty);
      hnu::EvalReport report;
      if (protocol == "cv3") {
        report = hnu::cross_validate(examples, config, a.t75, 3, seed);
      } else if (!eval_test.empty()) {
        auto test = hnu::replay_students(hnu::load_traces(eval_test), problems);
        report = hnu::holdout(examples,
                              hnu::build_examples(test, a.lib, a.lib, a.t75, config.key_mode, config.penalty),
                              config, a.t75);
      } else {
        auto [tr, te] = hnu::split_by_student(examples, 1.0 / 3, seed);
        report = hnu::holdout(tr, te, config, a.t75);
      }
      write_text(eval_out, eval_format == "json" ? eval_json(report).dump(2) + "\n" : eval_text(report));
    } else if (*sim) {
      hnu::ExperimentConfig config;
      if (!sim_config.empty()) config = hnu::config_from_json(read_json(sim_config));
      if (app.count("--seed")) config.seed = seed;
      if (sim_students) config.students = *sim_students;
      if (!sim_policy.empty()) {
        const hnu::PolicyConfig p = hnu::parse_policy(sim_policy);
        config.adaptive.kind = p.kind;
        config.adaptive.probability = p.probability;
      }
      if (!sim_penalty.empty()) config.adaptive.penalty = parse_switch(sim_penalty);
      if (!sim_mode.empty()) config.adaptive.key_mode = parse_mode(sim_mode);
      auto result = hnu::run_experiment(config, problems);
      if (!sim_traces.empty()) {
        std::ostringstream o;
        hnu::write_traces(result.events, o);
        write_text(sim_traces, o.str());
      }
      write_text(sim_out, sim_format == "json" ? result.report.to_json().dump(2) + "\n" : result.report.to_text());
    } else if (*hint) {
      const hnu::Problem* p = hnu::find_problem(problems, hint_problem);
      if (!p) throw CliError("unknown problem '" + hint_problem + "'");
      std::optional<Artifacts> a;
      if (!hint_nets.empty()) a = load_networks(hint_nets);
      hnu::ProofState state = hnu::ProofState::start(*p);
      for (const std::string& text : hint_derived) {
        const hnu::Expr e = hnu::parse_expression(text);
        auto app_ = hnu::find_justification(state, *p, e);
        if (!app_) throw CliError("'" + text + "' does not follow from the statements before it");
        state.derive(app_->rule, app_->premises, app_->derived);
      }
      hnu::Hint h = hnu::on_demand_hint(a ? &a->lib : nullptr, state, *p);
      std::cout << json{{"problem", p->id},
                        {"statement", h.statement.str()},
                        {"source", std::string(hnu::hint_source_name(h.source))}}
                       .dump()
                << '\n';
    } else if (*serve) {
      std::optional<hnu::HelpNeedModel> model;
      std::optional<Artifacts> nets;
      if (!serve_model.empty()) model = hnu::HelpNeedModel::from_json(read_json(serve_model));
      if (!serve_nets.empty()) nets = load_networks(serve_nets);
      hnu::ServiceOptions opts;
      opts.problems = problems;
      opts.model = model ? &*model : nullptr;
      opts.networks = nets ? &nets->lib : nullptr;
      opts.log_dir = serve_log;
      opts.seed = seed;
      hnu::TutorService service(opts);
      const std::size_t recovered = service.recover();
      httplib::Server server;
      hnu::mount_routes(server, service, origin);
      std::cerr << "serving on " << serve_host << ':' << port << " (" << recovered << " sessions recovered)\n";
      if (!server.listen(serve_host, port)) throw CliError("cannot listen on " + serve_host + ":" + std::to_string(port));
    }
  } catch (const CliError& e) {
    std::cerr << "error: invalid: " << e.what() << '\n';
    return 2;
  } catch (const hnu::PolicyError& e) {
    std::cerr << "error: invalid: " << e.what() << '\n';
    return 2;
  } catch (const hnu::ParseError& e) {
    std::cerr << "error: parse: " << e.what() << '\n';
    return 1;
  } catch (const hnu::TraceError& e) {
    std::cerr << "error: trace: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
