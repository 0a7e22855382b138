#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "kgqa/cli.hpp"
#include "kgqa/common.hpp"
#include "kgqa/endpoint.hpp"
#include "support/generators.hpp"

using namespace kgqa;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Local stand-in for a chat-completions service.
class FakeServer {
public:
    explicit FakeServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat", [handler](const httplib::Request& req, httplib::Response& res) { handler(req, res); });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST_CASE("help and usage errors") {
    const auto help = cli({"--help"});
    CHECK(help.code == kExitOk);
    CHECK(help.out.find("mine") != std::string::npos);
    CHECK(cli({"mine", "--help"}).code == kExitOk);

    const auto unknown = cli({"mine", "--bogus"});
    CHECK(unknown.code == kExitUsage);
    CHECK(lines(unknown.err) == 1);
    CHECK(unknown.err.rfind("error: usage: ", 0) == 0);

    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"mine"}).code == kExitUsage);
    CHECK(cli({"mine", "--kg", testgen::fixture("bieber.tsv"), "--pca", "0"}).code == kExitUsage);
    CHECK(cli({"run", "--bundle", "x", "--policy", "llm"}).code == kExitUsage);
}

TEST_CASE("data errors exit 1 with one line") {
    const auto missing = cli({"inspect", "stats", "--kg", "/nonexistent/graph.tsv"});
    CHECK(missing.code == kExitDomain);
    CHECK(lines(missing.err) == 1);

    const std::string dir = testgen::temp_dir("cli_err");
    write_file(dir + "/bad.tsv", "a\tp\tb\nbroken line\n");
    const auto bad = cli({"inspect", "stats", "--kg", dir + "/bad.tsv"});
    CHECK(bad.code == kExitDomain);
    CHECK(bad.err.find("line 2") != std::string::npos);
    CHECK(lines(bad.err) == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("the installed binary reports errors on one stderr line") {
    const std::string dir = testgen::temp_dir("cli_bin");
    const std::string cmd = std::string("\"") + KGQA_CLI_PATH + "\" inspect stats --kg /nonexistent.tsv 2>" + dir +
                            "/err.txt >/dev/null";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == kExitDomain);
    CHECK(lines(read_file(dir + "/err.txt")) == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("flags beat environment beats config file") {
    const std::string dir = testgen::temp_dir("cli_cfg");
    const std::string kg = testgen::fixture("uncle_family.tsv");
    write_file(dir + "/cfg.json", json{{"mine", {{"min-conf", 0.5}, {"min-hc", 0.2}, {"pca", 0.6}}}}.dump());
    auto manifest = [&] { return json::parse(read_file(dir + "/r.jsonl.manifest.json")).at("config"); };

    REQUIRE(cli({"--config", dir + "/cfg.json", "mine", "--kg", kg, "--out", dir + "/r.jsonl"}).code == 0);
    CHECK(manifest().at("min_conf") == 0.5);
    CHECK(manifest().at("pca_threshold") == 0.6);

    ::setenv("KGQA_MIN_CONF", "0.7", 1);
    REQUIRE(cli({"--config", dir + "/cfg.json", "mine", "--kg", kg, "--out", dir + "/r.jsonl"}).code == 0);
    CHECK(manifest().at("min_conf") == 0.7);
    REQUIRE(cli({"--config", dir + "/cfg.json", "mine", "--kg", kg, "--out", dir + "/r.jsonl", "--min-conf", "0.9"})
                .code == 0);
    CHECK(manifest().at("min_conf") == 0.9);
    CHECK(manifest().at("min_hc") == 0.2);
    ::unsetenv("KGQA_MIN_CONF");

    write_file(dir + "/broken.json", "{not json");
    CHECK(cli({"--config", dir + "/broken.json", "mine", "--kg", kg}).code == kExitUsage);
    std::filesystem::remove_all(dir);
}

TEST_CASE("pipeline stages are deterministic end to end") {
    const std::string dir = testgen::temp_dir("cli_pipe");
    const auto g = testgen::family_graph(3, 40);
    write_file(dir + "/kg.tsv", g.to_tsv());
    auto run_all = [&](const std::string& tag) {
        const std::string b = dir + "/" + tag;
        REQUIRE(cli({"mine", "--kg", dir + "/kg.tsv", "--out", dir + "/" + tag + ".rules.jsonl"}).code == 0);
        REQUIRE(cli({"bench", "--kg", dir + "/kg.tsv", "--rules", dir + "/" + tag + ".rules.jsonl", "--out", b,
                     "--seed", "5"})
                    .code == 0);
        REQUIRE(cli({"run", "--bundle", b, "--split", "all", "--out", b + "/pred.jsonl", "--parallel", "3"}).code == 0);
        REQUIRE(cli({"eval", "--bundle", b, "--split", "all", "--predictions", b + "/pred.jsonl", "--out",
                     b + "/report.json", "--csv", b + "/report.csv"})
                    .code == 0);
        CHECK(cli({"inspect", "verify", "--bundle", b}).code == 0);
        CHECK(cli({"inspect", "replay", "--bundle", b, "--traces", b + "/pred.jsonl.traces.jsonl"}).code == 0);
        return b;
    };
    const std::string a = run_all("a"), b = run_all("b");
    CHECK(read_file(dir + "/a.rules.jsonl") == read_file(dir + "/b.rules.jsonl"));
    for (const char* f : {"complete.tsv", "incomplete.tsv", "removals.jsonl", "questions.jsonl", "provenance.jsonl",
                          "pred.jsonl", "pred.jsonl.traces.jsonl", "report.csv"})
        CHECK_MESSAGE(sha256_file(a + "/" + f) == sha256_file(b + "/" + f), f);

    const json manifest = json::parse(read_file(a + "/manifest.json"));
    CHECK(manifest.at("counts").at("questions").get<std::size_t>() > 0);
    CHECK(manifest.at("files").at("questions.jsonl") == sha256_file(a + "/questions.jsonl"));
    const json report = json::parse(read_file(a + "/report.json"));
    CHECK(report.at("metrics").at("hits_any").get<double>() > 0);

    CHECK(cli({"eval", "--bundle", a, "--split", "test", "--predictions", a + "/pred.jsonl"}).code == kExitDomain);
    std::filesystem::remove_all(dir);
}

TEST_CASE("inspect helpers") {
    const std::string fig = testgen::fixture("bieber.tsv");
    auto r = cli({"inspect", "explore", "--kg", fig, "--entity", "Justin Bieber", "--hops", "2"});
    CHECK(r.code == 0);
    CHECK(r.out == "['hasParent', 'hasSibling', 'hasParent -> hasSon', 'hasParent -> hasSpouse', 'hasSibling -> hasSibling']\n");
    r = cli({"inspect", "ground", "--kg", fig, "--entity", "Justin Bieber", "--path", "hasParent -> hasSon"});
    CHECK(r.out.find("(Justin Bieber, hasParent, Jeremy Bieber) ; (Jeremy Bieber, hasSon, Jaxon Bieber)") != std::string::npos);
    CHECK(cli({"inspect", "explore", "--kg", fig, "--entity", "Justin Bieber", "--hops", "7"}).code == kExitDomain);

    const std::string dir = testgen::temp_dir("cli_anon");
    CHECK(cli({"inspect", "anonymize", "--kg", fig, "--out", dir + "/anon.tsv", "--seed", "4"}).code == 0);
    CHECK(load_graph(dir + "/anon.tsv").size() == load_graph(fig).size());
    CHECK(json::parse(read_file(dir + "/anon.tsv.mapping.json")).size() == load_graph(fig).entity_count());
    std::filesystem::remove_all(dir);
}

TEST_CASE("http client retries transient failures and parses tool calls") {
    std::atomic<int> hits{0};
    std::string auth, body;
    FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
        if (++hits == 1) {
            res.status = 503;
            return;
        }
        auth = req.get_header_value("Authorization");
        body = req.body;
        json reply = {{"choices",
                       {{{"message",
                          {{"tool_calls",
                            {{{"function", {{"name", "path_grounding"}, {"arguments", "{\"entity\": \"x\"}"}}}}}}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    EndpointConfig cfg;
    cfg.url = server.url();
    cfg.token = "secret";
    cfg.backoff = std::chrono::milliseconds(1);
    HttpChatClient client(cfg);
    const std::string text = client.chat(json::array({{{"role", "user"}, {"content", "hi"}}}));
    CHECK(json::parse(text) == json{{"tool", "path_grounding"}, {"entity", "x"}});
    CHECK(hits == 2);
    CHECK(auth == "Bearer secret");
    CHECK(json::parse(body).at("temperature") == 0);

    CHECK(extract_generated_text(json{{"choices", {{{"message", {{"content", "hello"}}}}}}}) == "hello");
    CHECK(extract_generated_text(json{{"choices", {{{"text", "t"}}}}}) == "t");
    CHECK(extract_generated_text(json{{"content", "c"}}) == "c");
    CHECK_THROWS_AS(extract_generated_text(json{{"nothing", 1}}), EndpointError);
}

TEST_CASE("http client gives up on client errors") {
    std::atomic<int> hits{0};
    FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
    });
    EndpointConfig cfg;
    cfg.url = server.url();
    cfg.backoff = std::chrono::milliseconds(1);
    HttpChatClient client(cfg);
    CHECK_THROWS_AS(client.chat(json::array()), EndpointError);
    CHECK(hits == 1);
    CHECK_THROWS_AS(HttpChatClient(EndpointConfig{"ftp://nowhere"}), Error);
}

TEST_CASE("external question backend through the CLI") {
    FakeServer server([](const httplib::Request& req, httplib::Response& res) {
        const std::string prompt = json::parse(req.body).at("messages").at(0).at("content");
        res.set_content(json{{"choices", {{{"message", {{"content", "Who is the uncle in question?"}}}}}}}.dump(),
                        "application/json");
        (void)prompt;
    });
    const std::string dir = testgen::temp_dir("cli_ext");
    const std::string kg = testgen::fixture("uncle_family.tsv");
    REQUIRE(cli({"mine", "--kg", kg, "--out", dir + "/rules.jsonl"}).code == 0);
    CHECK(cli({"bench", "--kg", kg, "--rules", dir + "/rules.jsonl", "--out", dir + "/b", "--question-backend",
               "external"})
              .code == kExitUsage);
    ::setenv(kEndpointUrlEnv, server.url().c_str(), 1);
    const auto r = cli({"bench", "--kg", kg, "--rules", dir + "/rules.jsonl", "--out", dir + "/b", "--question-backend",
                        "external", "--topic-side", "subject"});
    ::unsetenv(kEndpointUrlEnv);
    REQUIRE(r.code == 0);
    const json q = json::parse(read_file(dir + "/b/questions.jsonl"));
    CHECK(q.at("question") == "Who is the uncle in question?");
    const json prov = json::parse(read_file(dir + "/b/provenance.jsonl"));
    CHECK(prov.at("backend") == "external");
    CHECK(prov.at("prompt_sha256").get<std::string>().size() == 64);
    std::filesystem::remove_all(dir);
}
