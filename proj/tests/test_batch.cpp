#include <doctest.h>

#include <signal.h>
#include <unistd.h>

#include <chrono>
#include <regex>
#include <sstream>
#include <thread>

#include "batch.hpp"
#include "temp_dir.hpp"

using namespace kfarm;
using namespace kfarm::test;

namespace {

const std::string kPlotScript = "echo stdout\n"
                                "numbers = random_table[100]\n"
                                "fig = plot[numbers, \"xlabel\", \"ylabel\"]\n"
                                "export_eps[\"filename.eps\", fig]\n";

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        out.push_back(line);
    return out;
}

const std::regex kFooterRe(R"(^## elapsed [0-9]+\.[0-9]{3}$)");

bool wait_for_state(JobRecord& record, JobRecord::State want, double seconds) {
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::duration<double>(seconds);
    while (std::chrono::steady_clock::now() < deadline) {
        if (job_status(record) == want)
            return true;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    return job_status(record) == want;
}

// run in a temp dir so relative eps paths land in scratch space
struct CwdGuard {
    std::string old = std::filesystem::current_path().string();
    explicit CwdGuard(const std::string& to) {
        std::filesystem::current_path(to);
    }
    ~CwdGuard() { std::filesystem::current_path(old); }
};

} // namespace

TEST_CASE("parse_script classifies statements") {
    Script s = parse_script(kPlotScript);
    REQUIRE(s.statements.size() == 4);
    CHECK(s.statements[0].kind == Statement::Kind::echo_on);
    CHECK(s.statements[1].kind == Statement::Kind::assign);
    CHECK(s.statements[1].target == "numbers");
    CHECK(s.statements[2].kind == Statement::Kind::assign);
    CHECK(s.statements[3].kind == Statement::Kind::export_eps);
    CHECK(s.statements[3].path == "filename.eps");
    CHECK(s.statements[3].figure == "fig");

    CHECK(parse_script("").statements.empty());

    Script q = parse_script("q = 3.5\n");
    REQUIRE(q.statements.size() == 1);
    CHECK(q.statements[0].kind == Statement::Kind::assign);
    CHECK(q.statements[0].target == "q");
    CHECK(*q.statements[0].literal == Value::real(3.5));

    Script misc = parse_script("# a comment\n\neigen_demo\n");
    CHECK(misc.statements[0].kind == Statement::Kind::comment);
    CHECK(misc.statements[1].kind == Statement::Kind::blank);
    CHECK(misc.statements[2].kind == Statement::Kind::bare);

    CHECK_THROWS_WITH_AS(parse_script("ok = 1\n???\n"),
                         doctest::Contains("line 2"), Error);
    CHECK_THROWS_AS(parse_script("export_eps[fig]\n"), Error);
    CHECK_THROWS_AS(parse_script("x = \n"), Error);
}

TEST_CASE("run_script with echo reproduces input lines byte for byte") {
    TempDir tmp;
    CwdGuard cwd(tmp.path());
    std::ostringstream sink;
    Env env;
    Rng rng(42);
    int status = run_script(parse_script(kPlotScript), sink, env, rng);
    CHECK(status == 0);

    auto out = lines_of(sink.str());
    auto in = lines_of(kPlotScript);
    REQUIRE(out.size() == in.size() + 1);
    for (std::size_t i = 0; i < in.size(); ++i)
        CHECK(out[i] == in[i]);
    CHECK(std::regex_match(out.back(), kFooterRe));

    // assignments stay silent; the eps file exists
    for (const auto& line : out)
        CHECK(line.rfind("=> ", 0) != 0);
    CHECK(std::filesystem::exists(tmp.file("filename.eps")));
}

TEST_CASE("run_script without echo prints only results and the footer") {
    std::ostringstream sink;
    Env env;
    Rng rng(1);
    Script s = parse_script("t = tridiag[2, 0, 1.2, 2.1]\neigen[t]\n");
    CHECK(run_script(s, sink, env, rng) == 0);
    auto out = lines_of(sink.str());
    REQUIRE(out.size() == 2);
    CHECK(out[0].rfind("=> ", 0) == 0);
    Value eigs = parse_value(out[0].substr(3));
    CHECK(eigs.as_list().size() == 2);
    CHECK(std::regex_match(out[1], kFooterRe));
}

TEST_CASE("statement errors produce !! lines and stop the run") {
    std::ostringstream sink;
    Env env;
    Rng rng(1);
    Script s = parse_script("eigen_demo\nq = 3.5\n");
    CHECK(run_script(s, sink, env, rng) == 1);
    auto out = lines_of(sink.str());
    REQUIRE(out.size() == 1);
    CHECK(out[0].rfind("!! 1: BADTASK", 0) == 0);
    CHECK(env.find("q") == nullptr); // later statements skipped
}

TEST_CASE("assignments bind globals; locals do not leak") {
    std::ostringstream sink;
    Env env;
    Rng rng(1);
    Script s = parse_script("q = 3.5\n"
                            "m = tridiag[2, 0, 1.2, 2.1]\n"
                            "copy = m\n");
    CHECK(run_script(s, sink, env, rng) == 0);
    REQUIRE(env.find("q") != nullptr);
    CHECK(*env.find("q") == Value::real(3.5));
    CHECK(env.find("m") != nullptr);
    CHECK(*env.find("copy") == *env.find("m"));
    // only the three assigned names exist afterwards
    CHECK(env.size() == 3);
}

TEST_CASE("fixed seed makes runs deterministic except the footer") {
    auto run_once = [&] {
        std::ostringstream sink;
        Env env;
        Rng rng(20260809);
        run_script(parse_script("numbers = random_table[5]\nnumbers\n"), sink,
                   env, rng);
        auto out = lines_of(sink.str());
        out.pop_back(); // drop the timing footer
        return out;
    };
    CHECK(run_once() == run_once());
}

TEST_CASE("submit_detached runs the job to completion") {
    TempDir tmp;
    CwdGuard cwd(tmp.path());
    write_file(tmp.file("job.ks"), kPlotScript);

    auto t0 = std::chrono::steady_clock::now();
    JobRecord record =
        submit_detached(tmp.file("job.ks"), tmp.file("job.out"), 42);
    std::chrono::duration<double> submit_time =
        std::chrono::steady_clock::now() - t0;
    CHECK(submit_time.count() < 1.0); // returns without waiting for the job
    CHECK(record.pid > 0);

    REQUIRE(wait_for_state(record, JobRecord::State::done, 5.0));
    CHECK(record.elapsed >= 0.0);

    auto out = lines_of(read_file(tmp.file("job.out")));
    auto in = lines_of(kPlotScript);
    REQUIRE(out.size() == in.size() + 1);
    for (std::size_t i = 0; i < in.size(); ++i)
        CHECK(out[i] == in[i]);
    CHECK(std::regex_match(out.back(), kFooterRe));
    CHECK(std::filesystem::exists(tmp.file("filename.eps")));
    // pid file is gone once the job is done
    CHECK(!std::filesystem::exists(tmp.file("job.out.pid")));
}

TEST_CASE("submitting an unparsable script fails before spawning") {
    TempDir tmp;
    write_file(tmp.file("bad.ks"), "this is not = a statement ???\n");
    CHECK_THROWS_AS(submit_detached(tmp.file("bad.ks"), tmp.file("bad.out")),
                    Error);
    CHECK(!std::filesystem::exists(tmp.file("bad.out.pid")));
    CHECK_THROWS_AS(submit_detached(tmp.file("missing.ks"), tmp.file("x.out")),
                    Error);
}

TEST_CASE("a failing statement marks the job failed") {
    TempDir tmp;
    write_file(tmp.file("fail.ks"), "eigen_demo\n");
    JobRecord record =
        submit_detached(tmp.file("fail.ks"), tmp.file("fail.out"));
    REQUIRE(wait_for_state(record, JobRecord::State::failed, 5.0));
    auto content = read_file(tmp.file("fail.out"));
    CHECK(content.find("!! 1: BADTASK") != std::string::npos);
    CHECK(content.find("## elapsed") == std::string::npos);
}

TEST_CASE("killing a running job yields state failed") {
    TempDir tmp;
    // enough eigensolves to keep the job busy well past the kill below
    std::string heavy = "m = fill[500, 0.5, 1.0]\n";
    for (int i = 0; i < 8; ++i)
        heavy += "e" + std::to_string(i) + " = eigen[m]\n";
    write_file(tmp.file("heavy.ks"), heavy);
    JobRecord record =
        submit_detached(tmp.file("heavy.ks"), tmp.file("heavy.out"));
    REQUIRE(job_status(record) == JobRecord::State::running);
    kill(record.pid, SIGKILL);
    REQUIRE(wait_for_state(record, JobRecord::State::failed, 5.0));
}

TEST_CASE("job_status handles a missing output file") {
    JobRecord record = job_from_output("/nonexistent/path/job.out");
    CHECK(record.state == JobRecord::State::failed);
}
