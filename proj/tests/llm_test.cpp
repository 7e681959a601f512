#include "absieve/http_backend.hpp"
#include "absieve/llm.hpp"
#include "absieve/mock_backend.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <cstdlib>
#include <random>
#include <thread>

using namespace absieve;

namespace {

CompletionRequest request_for(std::string dataset, std::size_t row, PromptKind kind = PromptKind::Decision) {
    CompletionRequest r;
    r.model = "test-model";
    r.prompt = {kind, "prompt body"};
    r.dataset = std::move(dataset);
    r.row_index = row;
    return r;
}

errc backend_code(Backend& b, const CompletionRequest& r, int* status = nullptr) {
    try {
        b.complete(r);
    } catch (const backend_error& e) {
        if (status) *status = e.status();
        return e.code();
    }
    ADD_FAILURE() << "expected backend_error";
    return errc::fatal;
}

} // namespace

TEST(ParseDecision, Examples) {
    EXPECT_EQ(parse_decision("included"), Decision::Included);
    EXPECT_EQ(parse_decision(" Excluded.\n"), Decision::Excluded);
    EXPECT_EQ(parse_decision("Decision: included. The study is excluded from none of the criteria... excluded"),
              Decision::Unparseable);
}

TEST(ParseDecision, WholeWordFallback) {
    EXPECT_EQ(parse_decision("Decision: Included"), Decision::Included);
    EXPECT_EQ(parse_decision("The article should be excluded because it is a review."), Decision::Excluded);
    EXPECT_EQ(parse_decision("excludedness"), Decision::Unparseable);
    EXPECT_EQ(parse_decision("include"), Decision::Unparseable);
    EXPECT_EQ(parse_decision(""), Decision::Unparseable);
    EXPECT_EQ(parse_decision("\"'included'\"!"), Decision::Included);
}

TEST(ParseDecision, RandomDecorationsRecoverLabel) {
    std::mt19937 rng(99);
    auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
    const std::string spaces[] = {"", " ", "  ", "\n", "\t", " \r\n"};
    const std::string quotes[] = {"", "\"", "'", "`"};
    const std::string punct[] = {"", ".", ",", ":", ";", "!", "..", "!."};
    for (int i = 0; i < 2000; ++i) {
        const auto label = pick(2) ? Decision::Included : Decision::Excluded;
        std::string word(to_string(label));
        for (auto& c : word)
            if (pick(2)) c = static_cast<char>(c - 'a' + 'A');
        const auto& q = quotes[pick(4)];
        const auto text = spaces[pick(6)] + q + word + q + punct[pick(8)] + spaces[pick(6)];
        ASSERT_EQ(parse_decision(text), label) << "'" << text << "'";
    }
}

TEST(TokenEstimate, CeilingOfQuarterLength) {
    EXPECT_EQ(count_tokens_estimate(""), 0);
    EXPECT_EQ(count_tokens_estimate(std::string(400, 'a')), 100);
    EXPECT_EQ(count_tokens_estimate(std::string(401, 'a')), 101);
    EXPECT_EQ(count_tokens_estimate("\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9"), 1);
}

TEST(Mock, ReplaysScript) {
    MockBackend mock(MockScript::from_json(nlohmann::json::parse(R"({"default": "excluded", "IVM/0": "included"})")));
    EXPECT_EQ(mock.complete(request_for("IVM", 0)).text, "included");
    EXPECT_EQ(mock.complete(request_for("IVM", 1)).text, "excluded");
    EXPECT_EQ(mock.call_count(), 2u);
}

TEST(Mock, SequencesAndFollowups) {
    MockBackend mock(MockScript::from_json(nlohmann::json::parse(R"({
        "IVM/0": ["maybe", "included"],
        "explain": {"IVM/0": "because", "default": "generic"},
        "reflect": {"IVM/0": "oops"}
    })")));
    EXPECT_EQ(mock.complete(request_for("IVM", 0)).text, "maybe");
    EXPECT_EQ(mock.complete(request_for("IVM", 0)).text, "included");
    EXPECT_EQ(mock.complete(request_for("IVM", 0)).text, "included");
    EXPECT_EQ(mock.complete(request_for("IVM", 0, PromptKind::Explain)).text, "because");
    EXPECT_EQ(mock.complete(request_for("IVM", 5, PromptKind::Explain)).text, "generic");
    EXPECT_EQ(mock.complete(request_for("IVM", 0, PromptKind::Reflect)).text, "oops");
}

TEST(Mock, InjectedTransientFailuresThenSuccess) {
    MockBackend mock(MockScript::from_json(
        nlohmann::json::parse(R"({"IVM/0": "included", "failures": {"IVM/0": {"status": 429, "count": 2}}})")));
    int status = 0;
    EXPECT_EQ(backend_code(mock, request_for("IVM", 0), &status), errc::transient);
    EXPECT_EQ(status, 429);
    EXPECT_EQ(backend_code(mock, request_for("IVM", 0)), errc::transient);
    EXPECT_EQ(mock.complete(request_for("IVM", 0)).text, "included");
}

TEST(Mock, PersistentAndFatalFailures) {
    MockBackend mock(MockScript::from_json(
        nlohmann::json::parse(R"({"failures": {"A/0": {"status": 500}, "A/1": {"status": 400, "count": 1}}})")));
    for (int i = 0; i < 5; ++i) EXPECT_EQ(backend_code(mock, request_for("A", 0)), errc::transient);
    EXPECT_EQ(backend_code(mock, request_for("A", 1)), errc::fatal);
    EXPECT_EQ(mock.complete(request_for("A", 1)).text, "");
}

TEST(Mock, SameScriptSameResults) {
    const auto script = nlohmann::json::parse(R"({"default": "excluded", "X/1": ["a", "b"], "failures": {"X/2": {"count": 1}}})");
    auto run = [&] {
        MockBackend mock(MockScript::from_json(script));
        std::vector<std::string> out;
        for (std::size_t row : {0u, 1u, 1u, 2u, 2u}) {
            try {
                out.push_back(mock.complete(request_for("X", row)).text);
            } catch (const backend_error& e) {
                out.push_back("!" + std::to_string(e.status()));
            }
        }
        return out;
    };
    EXPECT_EQ(run(), run());
    EXPECT_EQ(run(), (std::vector<std::string>{"excluded", "a", "b", "!500", "excluded"}));
}

TEST(Mock, RejectsMalformedScript) {
    EXPECT_THROW(MockScript::from_json(nlohmann::json::parse("[1,2]")), error);
    EXPECT_THROW(MockScript::from_json(nlohmann::json::parse(R"({"A/0": 5})")), error);
}

// ---- HTTP backend against a local server ---------------------------------

class HttpBackendTest : public ::testing::Test {
  protected:
    void SetUp() override {
        ::setenv("ABSIEVE_TEST_KEY", "sk-test", 1);
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_body_ = req.body;
            last_auth_ = req.get_header_value("Authorization");
            ++hits_;
            res.status = status_;
            res.set_content(reply_, "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    void TearDown() override {
        server_.stop();
        thread_.join();
        ::unsetenv("ABSIEVE_TEST_KEY");
    }

    HttpBackend backend() {
        return HttpBackend({"http://127.0.0.1:" + std::to_string(port_), "ABSIEVE_TEST_KEY", std::chrono::seconds(5)});
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    int status_ = 200;
    std::string reply_;
    std::string last_body_;
    std::string last_auth_;
    int hits_ = 0;
};

TEST_F(HttpBackendTest, SendsChatCompletionAndReadsUsage) {
    reply_ = R"({"choices":[{"message":{"role":"assistant","content":"excluded"}}],"usage":{"prompt_tokens":321,"completion_tokens":2}})";
    auto b = backend();
    auto req = request_for("IVM", 3);
    req.temperature = 0.0;
    req.max_output_tokens = 8;
    const auto res = b.complete(req);
    EXPECT_EQ(res.text, "excluded");
    EXPECT_EQ(res.input_tokens, 321);
    EXPECT_EQ(res.output_tokens, 2);

    const auto body = nlohmann::json::parse(last_body_);
    EXPECT_EQ(body["model"], "test-model");
    EXPECT_EQ(body["messages"].size(), 1u);
    EXPECT_EQ(body["messages"][0]["role"], "user");
    EXPECT_EQ(body["messages"][0]["content"], "prompt body");
    EXPECT_EQ(body["temperature"], 0.0);
    EXPECT_EQ(body["max_tokens"], 8);
    EXPECT_EQ(last_auth_, "Bearer sk-test");
}

TEST_F(HttpBackendTest, MissingUsageFallsBackToEstimate) {
    reply_ = R"({"choices":[{"message":{"content":"included"}}]})";
    auto b = backend();
    const auto res = b.complete(request_for("IVM", 0));
    EXPECT_EQ(res.input_tokens, count_tokens_estimate("prompt body"));
}

TEST_F(HttpBackendTest, StatusClassification) {
    auto b = backend();
    reply_ = R"({"error":"x"})";
    status_ = 429;
    EXPECT_EQ(backend_code(b, request_for("IVM", 0)), errc::transient);
    status_ = 503;
    EXPECT_EQ(backend_code(b, request_for("IVM", 0)), errc::transient);
    status_ = 401;
    EXPECT_EQ(backend_code(b, request_for("IVM", 0)), errc::fatal);
    status_ = 200;
    reply_ = "not json";
    EXPECT_EQ(backend_code(b, request_for("IVM", 0)), errc::fatal);
}

TEST_F(HttpBackendTest, MissingCredentialFailsBeforeNetwork) {
    ::unsetenv("ABSIEVE_TEST_KEY");
    auto b = backend();
    EXPECT_FALSE(b.has_credential());
    EXPECT_EQ(backend_code(b, request_for("IVM", 0)), errc::auth_missing);
    EXPECT_EQ(hits_, 0);
}

TEST(HttpBackend, ConnectionFailureIsTransient) {
    ::setenv("ABSIEVE_TEST_KEY", "k", 1);
    HttpBackend b({"http://127.0.0.1:1", "ABSIEVE_TEST_KEY", std::chrono::seconds(2)});
    EXPECT_EQ(backend_code(b, request_for("IVM", 0)), errc::transient);
    ::unsetenv("ABSIEVE_TEST_KEY");
}
