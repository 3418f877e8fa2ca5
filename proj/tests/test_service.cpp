#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "hnu/http.hpp"
#include "hnu/service.hpp"

using namespace hnu;
using nlohmann::json;

namespace {

Problem make_problem(std::string id, Section s, std::vector<std::string> premises, std::string goal,
                     std::size_t optimal) {
  Problem p;
  p.id = std::move(id);
  for (const auto& x : premises) p.premises.push_back(parse_expression(x));
  p.conclusion = parse_expression(goal);
  p.allowed_rules = {RuleId::kModusPonens, RuleId::kConjunction, RuleId::kSimplification};
  p.section = s;
  p.optimal_length = optimal;
  return p;
}

std::vector<Problem> three_problems() {
  return {make_problem("pre", Section::kPretest, {"p", "p -> q"}, "q", 1),
          make_problem("tr", Section::kTraining, {"p -> q", "p -> r", "p"}, "q & r", 3),
          make_problem("post", Section::kPosttest, {"s & t"}, "t", 1)};
}

// Needs help exactly when at least one step has been taken.
HelpNeedModel after_first_step_model() {
  std::vector<Example> data;
  for (int i = 0; i < 40; ++i) {
    Example e;
    e.student = "s" + std::to_string(i % 5);
    e.x.state_free.assign(state_free_feature_names().size(), 0);
    e.x.state_free[1] = i % 4;
    e.label = i % 4 > 0;
    data.push_back(e);
  }
  ModelConfig mc;
  mc.forest.n_trees = 5;
  mc.forest.max_features = state_free_feature_names().size();
  return HelpNeedModel::train(data, mc);
}

struct Fixture {
  double now = 1000;
  HelpNeedModel model = after_first_step_model();
  std::unique_ptr<TutorService> service;

  explicit Fixture(std::optional<std::filesystem::path> log_dir = std::nullopt) { service = make(log_dir); }

  std::unique_ptr<TutorService> make(std::optional<std::filesystem::path> log_dir) {
    ServiceOptions o;
    o.problems = three_problems();
    o.model = &model;
    o.log_dir = std::move(log_dir);
    o.clock = [this] { return now; };
    return std::make_unique<TutorService>(std::move(o));
  }
};

json mp(std::vector<std::size_t> premises, const std::string& stmt) {
  return {{"kind", "derive"}, {"rule", "MP"}, {"premises", premises}, {"statement", stmt}};
}

int status_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 200;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("hnu_service_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  return d;
}

}  // namespace

TEST(Service, WalkThroughAllSections) {
  Fixture f;
  TutorService& s = *f.service;
  json c = s.create({{"student", "alice"}, {"policy", "control"}});
  const std::string id = c["id"];
  EXPECT_EQ(id, "s00001");
  EXPECT_EQ(c["student"], "alice");
  EXPECT_EQ(c["section"], "pretest");
  EXPECT_EQ(c["problem_index"], 0);
  EXPECT_EQ(c["problem_count"], 3);
  EXPECT_EQ(c["statements"].size(), 2u);
  EXPECT_TRUE(c["statements"][0]["premise"].get<bool>());
  EXPECT_FALSE(c["complete"].get<bool>());

  EXPECT_EQ(status_of([&] { s.hint(id); }), 409);
  EXPECT_EQ(status_of([&] { s.advance(id); }), 409);

  f.now += 7;
  json wrong = s.submit(id, mp({0, 1}, "r"));
  EXPECT_FALSE(wrong["correct"].get<bool>());
  EXPECT_EQ(wrong["statements"].size(), 2u);

  f.now += 5;
  json ok = s.submit(id, mp({0, 1}, "q"));
  EXPECT_TRUE(ok["correct"].get<bool>());
  EXPECT_TRUE(ok["complete"].get<bool>());
  EXPECT_EQ(ok["statements"][2]["rule"], "MP");
  EXPECT_EQ(ok["statements"][2]["from"], json::array({0, 1}));
  EXPECT_TRUE(ok["proactive_hint"].is_null());
  EXPECT_EQ(status_of([&] { s.submit(id, mp({0, 1}, "q")); }), 409);
  EXPECT_EQ(status_of([&] { s.hint(id); }), 409);

  json t = s.advance(id);
  EXPECT_EQ(t["section"], "training");
  EXPECT_EQ(t["problem"]["id"], "tr");

  f.now += 3;
  json h = s.hint(id);
  const std::string stmt = h["hint"]["statement"];
  EXPECT_EQ(h["hint"]["agency"], "on_demand");
  EXPECT_EQ(h["hint"]["source"], "search_fallback");
  EXPECT_EQ(h["pending_hint"]["statement"], stmt);
  json after = s.submit(id, mp(stmt == "q" ? std::vector<std::size_t>{0, 2} : std::vector<std::size_t>{1, 2}, stmt));
  ASSERT_FALSE(after["justified_hint"].is_null());
  EXPECT_EQ(after["justified_hint"]["statement"], stmt);
  EXPECT_TRUE(after["hints"][0]["justified"].get<bool>());
  EXPECT_EQ(status_of([&] { s.submit(id, mp(stmt == "q" ? std::vector<std::size_t>{0, 2} : std::vector<std::size_t>{1, 2}, stmt)); }),
            409);

  const std::string other = stmt == "q" ? "r" : "q";
  s.submit(id, mp(other == "q" ? std::vector<std::size_t>{0, 2} : std::vector<std::size_t>{1, 2}, other));
  json done = s.submit(id, {{"kind", "derive"}, {"rule", "Conj"}, {"premises", {3, 4}}, {"statement", "q & r"}});
  EXPECT_TRUE(done["complete"].get<bool>());

  json post = s.advance(id);
  EXPECT_EQ(post["section"], "posttest");
  s.submit(id, {{"rule", "Simp"}, {"premises", {0}}, {"statement", "t"}});
  json fin = s.advance(id);
  EXPECT_TRUE(fin["finished"].get<bool>());
  EXPECT_EQ(status_of([&] { s.advance(id); }), 409);
  EXPECT_EQ(status_of([&] { s.submit(id, mp({0}, "t")); }), 409);
}

TEST(Service, LogReplaysIntoSteps) {
  Fixture f;
  TutorService& s = *f.service;
  const std::string id = s.create({{"policy", "control"}})["id"];
  f.now += 7;
  s.submit(id, mp({0, 1}, "r"));
  f.now += 5;
  s.submit(id, mp({0, 1}, "q"));
  auto ev = s.events(id);
  ASSERT_EQ(ev.size(), 3u);
  auto steps = events_to_steps(ev, three_problems()[0]);
  ASSERT_EQ(steps.size(), 1u);
  EXPECT_DOUBLE_EQ(steps[0].duration, 12);
  EXPECT_EQ(steps[0].incorrect_attempts, 1u);
  EXPECT_TRUE(steps[0].post_goal);
  for (const TraceEvent& e : ev) EXPECT_EQ(e.student, id);
}

TEST(Service, BadRequests) {
  Fixture f;
  TutorService& s = *f.service;
  EXPECT_EQ(status_of([&] { s.get("s99999"); }), 404);
  EXPECT_EQ(status_of([&] { s.create({{"policy", "sometimes"}}); }), 422);
  EXPECT_EQ(status_of([&] { s.create(json::array()); }), 422);
  const std::string id = s.create({{"policy", "control"}})["id"];
  EXPECT_EQ(status_of([&] { s.submit(id, {{"rule", "XX"}, {"premises", {0}}, {"statement", "q"}}); }), 422);
  EXPECT_EQ(status_of([&] { s.submit(id, mp({0, 9}, "q")); }), 422);
  EXPECT_EQ(status_of([&] { s.submit(id, mp({0, 1}, "p ->")); }), 422);
  EXPECT_EQ(status_of([&] { s.submit(id, {{"rule", "MP"}, {"statement", "q"}}); }), 422);
  EXPECT_EQ(status_of([&] { s.submit(id, {{"kind", "delete"}, {"index", 0}}); }), 422);
  EXPECT_EQ(status_of([&] { s.submit(id, {{"kind", "jump"}}); }), 422);
  EXPECT_EQ(status_of([&] { s.submit(id, json("q")); }), 422);
  json negative = mp({0, 1}, "q");
  negative["premises"] = json::array({0, -1});
  EXPECT_EQ(status_of([&] { s.submit(id, negative); }), 422);
  EXPECT_EQ(status_of([&] { s.submit(id, {{"kind", "delete"}, {"index", -2}}); }), 422);
}

TEST(Service, DeleteStep) {
  Fixture f;
  TutorService& s = *f.service;
  const std::string id = s.create({{"policy", "control"}})["id"];
  s.submit(id, mp({0, 1}, "q"));
  s.advance(id);
  s.submit(id, mp({0, 2}, "q"));
  json r = s.submit(id, {{"kind", "delete"}, {"index", 3}});
  EXPECT_TRUE(r["correct"].get<bool>());
  EXPECT_EQ(r["statements"].size(), 3u);
  EXPECT_EQ(status_of([&] { s.submit(id, {{"kind", "delete"}, {"index", 3}}); }), 422);
  auto ev = s.events(id);
  EXPECT_EQ(ev.back().kind, EventKind::kDelete);
  EXPECT_EQ(ev.back().statement, "q");
}

TEST(Service, AdaptiveNeedsModel) {
  ServiceOptions o;
  o.problems = three_problems();
  TutorService s(std::move(o));
  EXPECT_EQ(status_of([&] { s.create({{"policy", "adaptive"}}); }), 422);
  EXPECT_EQ(status_of([&] { s.create({{"policy", "control"}}); }), 200);
}

namespace {

// Moves a fresh session to the training problem.
std::string to_training(TutorService& s, const std::string& policy) {
  const std::string id = s.create({{"policy", policy}})["id"];
  s.submit(id, mp({0, 1}, "q"));
  s.advance(id);
  return id;
}

}  // namespace

TEST(Service, AdaptiveSendsProactiveHint) {
  Fixture f;
  TutorService& s = *f.service;
  const std::string id = to_training(s, "adaptive");
  EXPECT_TRUE(s.get(id)["pending_hint"].is_null());
  json r = s.submit(id, mp({0, 2}, "q"));
  ASSERT_FALSE(r["proactive_hint"].is_null());
  EXPECT_EQ(r["proactive_hint"]["agency"], "proactive");
  EXPECT_EQ(r["proactive_hint"]["statement"], "r");
  bool logged = false;
  for (const TraceEvent& e : s.events(id)) logged = logged || e.kind == EventKind::kProactiveHint;
  EXPECT_TRUE(logged);
}

TEST(Service, ControlNeverSendsProactiveHints) {
  Fixture f;
  TutorService& s = *f.service;
  const std::string id = to_training(s, "control");
  json r = s.submit(id, mp({0, 2}, "q"));
  EXPECT_TRUE(r["proactive_hint"].is_null());
  r = s.submit(id, mp({1, 2}, "r"));
  EXPECT_TRUE(r["proactive_hint"].is_null());
  std::size_t predicted = 0;
  for (const TraceEvent& e : s.events(id)) {
    EXPECT_NE(e.kind, EventKind::kProactiveHint);
    if (e.prediction) {
      ++predicted;
      EXPECT_TRUE(e.prediction->shadow);
    }
  }
  EXPECT_EQ(predicted, 2u);
}

TEST(Service, RecoversFromLogDirectory) {
  const auto dir = fresh_dir("recover");
  json before;
  std::string id;
  {
    Fixture f(dir);
    TutorService& s = *f.service;
    id = to_training(s, "adaptive");
    f.now += 4;
    s.submit(id, mp({0, 2}, "q"));
    s.hint(id);
    before = s.get(id);
    EXPECT_TRUE(std::filesystem::exists(dir / (id + ".jsonl")));
    EXPECT_TRUE(std::filesystem::exists(dir / (id + ".json")));
  }
  Fixture g(dir);
  TutorService& s = *g.service;
  EXPECT_EQ(s.recover(), 1u);
  json after = s.get(id);
  EXPECT_EQ(after["statements"], before["statements"]);
  EXPECT_EQ(after["problem_index"], before["problem_index"]);
  EXPECT_EQ(after["hints"], before["hints"]);
  EXPECT_EQ(after["pending_hint"], before["pending_hint"]);
  json done = s.submit(id, mp({1, 2}, "r"));
  ASSERT_FALSE(done["justified_hint"].is_null());
  EXPECT_EQ(s.create({{"policy", "control"}})["id"], "s00002");
  std::filesystem::remove_all(dir);
}

TEST(Http, RoutesStatusesAndCors) {
  Fixture f;
  httplib::Server server;
  mount_routes(server, *f.service);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto created = cli.Post("/sessions", R"({"policy":"control","student":"bo"})", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 200);
  EXPECT_EQ(created->get_header_value("Access-Control-Allow-Origin"), "*");
  const std::string id = json::parse(created->body)["id"];

  auto got = cli.Get("/sessions/" + id);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->status, 200);
  EXPECT_EQ(json::parse(got->body)["student"], "bo");

  EXPECT_EQ(cli.Get("/sessions/nope")->status, 404);
  EXPECT_EQ(cli.Post("/sessions", "{not json", "application/json")->status, 422);
  EXPECT_EQ(cli.Post("/sessions/" + id + "/hint", "", "application/json")->status, 409);
  EXPECT_EQ(cli.Post("/sessions/" + id + "/advance", "", "application/json")->status, 409);

  auto wrong = cli.Post("/sessions/" + id + "/steps", mp({0, 1}, "r").dump(), "application/json");
  EXPECT_EQ(wrong->status, 200);
  EXPECT_FALSE(json::parse(wrong->body)["correct"].get<bool>());
  auto right = cli.Post("/sessions/" + id + "/steps", mp({0, 1}, "q").dump(), "application/json");
  EXPECT_TRUE(json::parse(right->body)["complete"].get<bool>());
  auto adv = cli.Post("/sessions/" + id + "/advance", "", "application/json");
  EXPECT_EQ(adv->status, 200);
  auto hint = cli.Post("/sessions/" + id + "/hint", "", "application/json");
  EXPECT_EQ(hint->status, 200);
  EXPECT_TRUE(json::parse(hint->body).contains("hint"));

  auto pre = cli.Options("/sessions");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  EXPECT_EQ(pre->get_header_value("Access-Control-Allow-Methods"), "GET, POST, OPTIONS");

  server.stop();
  th.join();
}
