#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <memory>
#include <nlohmann/json.hpp>
#include <thread>

#include "ctikit/digest.hpp"
#include "ctikit/error.hpp"
#include "ctikit/modelio.hpp"

using namespace ctikit;
using namespace ctikit::modelio;
using nlohmann::json;

TEST(SampleParams, SameSeedSameParams) {
    Rng a(7), b(7);
    EXPECT_EQ(sample_params(a), sample_params(b));
}

TEST(SampleParams, RangeAndMean) {
    Rng rng(2024);
    double sum = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const auto p = sample_params(rng);
        ASSERT_GE(p.temperature, 0.2);
        ASSERT_LE(p.temperature, 1.0);
        ASSERT_GE(p.top_p, 0.2);
        ASSERT_LE(p.top_p, 1.0);
        EXPECT_NO_THROW(p.validate());
        sum += p.temperature;
    }
    EXPECT_NEAR(sum / n, 0.6, 0.02);
}

TEST(SampleParams, JsonRoundTrip) {
    Rng rng(1);
    const auto p = sample_params(rng);
    EXPECT_EQ(sampling_from_json(to_json(p)), p);
    EXPECT_THROW((SamplingParams{0.1, 0.5, 0}.validate()), ValidationError);
}

TEST(Mock, OutputIsDigestOfRequest) {
    BackendRegistry reg;
    reg.add("mock-a", std::make_shared<MockBackend>());
    const SamplingParams params{0.5, 0.75, 1};
    const auto first = generate(reg, "mock-a", "abc", params);
    const auto second = generate(reg, "mock-a", "abc", params);
    EXPECT_EQ(first.text, second.text);

    std::string buf = std::string("mock-a") + '\x1f' + "user" + '\x1f' + "abc" + '\x1f' + "1" + '\x1f' + "0.5" +
                      '\x1f' + "0.75" + '\x1f';
    const std::string expected_digest = sha256_hex(buf);
    EXPECT_EQ(first.text.rfind(std::string(MockBackend::kMarker) + " " + expected_digest, 0), 0u);

    EXPECT_NE(generate(reg, "mock-a", "abd", params).text, first.text);
    EXPECT_NE(generate(reg, "mock-a", "abc", SamplingParams{0.5, 0.75, 2}).text, first.text);
}

TEST(Mock, DistinctBackendIdsDiffer) {
    BackendRegistry reg;
    reg.add("mock-a", std::make_shared<MockBackend>());
    reg.add("mock-b", std::make_shared<MockBackend>());
    const SamplingParams p{0.5, 0.5, 3};
    EXPECT_NE(generate(reg, "mock-a", "x", p).text, generate(reg, "mock-b", "x", p).text);
    EXPECT_EQ(reg.ids(), (std::vector<std::string>{"mock-a", "mock-b"}));
}

TEST(Generate, UnregisteredBackend) {
    BackendRegistry reg;
    try {
        generate(reg, "nope", "abc", {});
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_NE(std::string(e.what()).find("unregistered backend"), std::string::npos);
    }
}

TEST(Generate, EmptyCompletionAndPromptAreErrors) {
    BackendRegistry reg;
    reg.add("blank", std::make_shared<FunctionBackend>([](const CompletionRequest&) { return std::string(); }));
    reg.add("mock", std::make_shared<MockBackend>());
    EXPECT_THROW(generate(reg, "blank", "abc", {}), BackendError);
    EXPECT_THROW(generate(reg, "mock", "", {}), BackendError);
}

TEST(Generate, PromptReachesBackendUnchanged) {
    BackendRegistry reg;
    std::string seen;
    reg.add("echo", std::make_shared<FunctionBackend>([&](const CompletionRequest& r) {
                seen = prompt_text(r);
                return std::string("ok");
            }));
    const std::string prompt = "  line one\n\tline two {demo} \xE2\x9C\x93  ";
    generate(reg, "echo", prompt, {});
    EXPECT_EQ(seen, prompt);
}

TEST(Registry, DuplicateIdRejected) {
    BackendRegistry reg;
    reg.add("a", std::make_shared<MockBackend>());
    EXPECT_THROW(reg.add("a", std::make_shared<MockBackend>()), ConfigError);
}

namespace {

class LocalServer {
public:
    explicit LocalServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/generate", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/generate"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

HttpEndpoint endpoint(const std::string& url) {
    HttpEndpoint e;
    e.url = url;
    e.model = "test-model";
    e.timeout = std::chrono::milliseconds(2000);
    e.retry.initial_backoff = std::chrono::milliseconds(5);
    return e;
}

}  // namespace

TEST(HttpBackend, RetriesServerErrorsThenFails) {
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 500;
    });
    HttpBackend backend(endpoint(server.url()));
    CompletionRequest req{"remote", {{"user", "hello"}}, {}, OutputMode::Text, ""};
    EXPECT_THROW(backend.complete(req), TransportError);
    EXPECT_EQ(hits.load(), 3);
}

TEST(HttpBackend, SpeaksWireContract) {
    json received;
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        if (hits++ == 0) {
            res.status = 503;
            return;
        }
        received = json::parse(req.body);
        res.set_content(json{{"text", "remote says hi"}}.dump(), "application/json");
    });
    HttpBackend backend(endpoint(server.url()));
    CompletionRequest req{"remote", {{"user", "hello"}}, {0.4, 0.9, 77}, OutputMode::Structured, "entities"};
    EXPECT_EQ(backend.complete(req), "remote says hi");
    EXPECT_EQ(hits.load(), 2);
    EXPECT_EQ(received["model"], "test-model");
    EXPECT_EQ(received["messages"][0]["content"], "hello");
    EXPECT_EQ(received["seed"], 77);
    EXPECT_EQ(received["response_format"], "entities");
}

TEST(HttpBackend, ClientErrorIsNotRetried) {
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
    });
    HttpBackend backend(endpoint(server.url()));
    CompletionRequest req{"remote", {{"user", "hello"}}, {}, OutputMode::Text, ""};
    try {
        backend.complete(req);
        FAIL();
    } catch (const TransportError&) {
        FAIL() << "400 must not be reported as a transport error";
    } catch (const BackendError&) {
    }
    EXPECT_EQ(hits.load(), 1);
}
