#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "xvqa/study/server.hpp"

using namespace xvqa;
using namespace xvqa::study;

namespace {

std::vector<HitRecord> two_hits() {
    std::vector<HitRecord> hits;
    for (int i = 0; i < 2; ++i) {
        HitRecord h;
        h.example_id = "ex" + std::to_string(i);
        h.hit_id = hit_id_for(h.example_id);
        h.question_tokens = {"is", "there", "a", "cup"};
        h.predicted = {"no", {"pred", "explanation"}};
        h.ground_truth = {"yes", {"gold", "explanation"}};
        if (i == 1) h.display_order = {Context::ground_truth, Context::predicted};
        hits.push_back(std::move(h));
    }
    return hits;
}

// Runs the routes on an ephemeral loopback port for the lifetime of the object.
struct LiveServer {
    StudyService svc;
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit LiveServer(std::vector<HitRecord> hits = two_hits()) : svc(std::move(hits), ResponseStore()) {
        install_routes(server, svc);
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LiveServer() {
        server.stop();
        thread.join();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

std::string submission(const std::string& hit, const std::string& worker, int slot, const std::string& choice) {
    return json{{"hit_id", hit}, {"worker_id", worker}, {"slot", slot}, {"choice", choice}}.dump();
}

} // namespace

TEST(Server, NextHitRequiresWorker) {
    LiveServer s;
    auto c = s.client();
    auto r = c.Get("/api/hits/next");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);
}

TEST(Server, PayloadIsBlindToContextLabels) {
    LiveServer s;
    auto c = s.client();
    auto r = c.Get("/api/hits/next?worker=w1");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(r->body.find("predicted"), std::string::npos);
    EXPECT_EQ(r->body.find("ground_truth"), std::string::npos);
    auto j = json::parse(r->body);
    EXPECT_EQ(j.at("hit_id"), "hit-ex0");
    EXPECT_EQ(j.at("contexts").size(), 2u);
}

TEST(Server, StoresResolvesSlotsAndRejectsBadSubmissions) {
    LiveServer s;
    auto c = s.client();
    auto ok = c.Post("/api/responses", submission("hit-ex1", "w1", 0, "YES"), "application/json");
    ASSERT_TRUE(ok);
    EXPECT_EQ(ok->status, 201);
    EXPECT_EQ(json::parse(ok->body).at("status"), "stored");
    auto dup = c.Post("/api/responses", submission("hit-ex1", "w1", 0, "NO"), "application/json");
    EXPECT_EQ(dup->status, 409);
    auto unknown = c.Post("/api/responses", submission("hit-zz", "w1", 0, "YES"), "application/json");
    EXPECT_EQ(unknown->status, 404);
    auto bad_choice = c.Post("/api/responses", submission("hit-ex1", "w1", 1, "MAYBE"), "application/json");
    EXPECT_EQ(bad_choice->status, 400);
    auto bad_slot = c.Post("/api/responses", submission("hit-ex1", "w1", 2, "YES"), "application/json");
    EXPECT_EQ(bad_slot->status, 400);
    auto not_json = c.Post("/api/responses", "{", "application/json");
    EXPECT_EQ(not_json->status, 400);
    auto by_context = c.Post("/api/responses",
                             json{{"hit_id", "hit-ex1"}, {"worker_id", "w1"}, {"context", "predicted"}, {"choice", "NO"}}.dump(),
                             "application/json");
    EXPECT_EQ(by_context->status, 201);
    // slot 0 of hit-ex1 is the ground-truth context, so the explicit predicted one is not a duplicate
    auto rep = json::parse(c.Get("/api/report")->body);
    EXPECT_EQ(rep.at("responses"), 2);
}

TEST(Server, WorkerFinishesAllHitsThenGets204) {
    LiveServer s;
    auto c = s.client();
    for (int i = 0; i < 2; ++i) {
        auto r = c.Get("/api/hits/next?worker=w1");
        ASSERT_EQ(r->status, 200);
        const auto id = json::parse(r->body).at("hit_id").get<std::string>();
        EXPECT_EQ(id, "hit-ex" + std::to_string(i));
        for (int slot = 0; slot < 2; ++slot)
            EXPECT_EQ(c.Post("/api/responses", submission(id, "w1", slot, "YES"), "application/json")->status, 201);
    }
    EXPECT_EQ(c.Get("/api/hits/next?worker=w1")->status, 204);
    EXPECT_EQ(s.svc.size(), 4u);
}

TEST(Server, AtMostThreeWorkersPerHit) {
    std::vector<HitRecord> one = two_hits();
    one.resize(1);
    LiveServer s(one);
    auto c = s.client();
    for (const char* w : {"a", "b", "c"}) EXPECT_EQ(c.Get(std::string("/api/hits/next?worker=") + w)->status, 200);
    EXPECT_EQ(c.Get("/api/hits/next?worker=d")->status, 204);
    // a reserved worker keeps receiving the same HIT until finished
    EXPECT_EQ(c.Get("/api/hits/next?worker=a")->status, 200);
}

TEST(Server, EmptyReportAndBuiltinPage) {
    LiveServer s;
    auto c = s.client();
    auto rep = c.Get("/api/report");
    ASSERT_TRUE(rep);
    EXPECT_EQ(rep->status, 200);
    EXPECT_EQ(json::parse(rep->body), (json{{"responses", 0}}));
    auto page = c.Get("/");
    ASSERT_TRUE(page);
    EXPECT_EQ(page->status, 200);
    EXPECT_NE(page->body.find("<html"), std::string::npos);
    EXPECT_NE(page->body.find("/api/responses"), std::string::npos);
}

TEST(Server, ServesStaticAssetsFromUiDir) {
    const auto dir = std::filesystem::temp_directory_path() / "xvqa_ui_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir / "index.html") << "<html>custom ui</html>";
        std::ofstream(dir / "app.js") << "console.log(1);";
    }
    ::setenv("XVQA_UI_DIR", dir.c_str(), 1);
    {
        LiveServer s;
        auto c = s.client();
        auto page = c.Get("/");
        ASSERT_TRUE(page);
        EXPECT_EQ(page->status, 200);
        EXPECT_NE(page->body.find("custom ui"), std::string::npos);
        auto js = c.Get("/app.js");
        ASSERT_TRUE(js);
        EXPECT_EQ(js->status, 200);
        EXPECT_EQ(js->body, "console.log(1);");
        EXPECT_EQ(c.Get("/api/hits/next?worker=x")->status, 200);
    }
    ::unsetenv("XVQA_UI_DIR");
    std::filesystem::remove_all(dir);
}
