// Exercises the extern-C surface the CLI is built on, through the shared
// library only.

#include <doctest.h>

#include <chrono>
#include <cstring>
#include <string>
#include <thread>

#include "kfarm.h"
#include "temp_dir.hpp"

using kfarm::test::TempDir;
using kfarm::test::write_file;

namespace {

struct OwnedString {
    char* s = nullptr;
    ~OwnedString() { kf_string_free(s); }
    std::string str() const { return s ? s : ""; }
};

struct FarmHandle {
    kf_farm* farm = nullptr;
    ~FarmHandle() {
        if (farm) {
            kf_farm_close(farm);
            kf_farm_free(farm);
        }
    }
};

kf_farm* new_test_farm() {
    kf_farm* farm = nullptr;
    REQUIRE(kf_farm_new(&farm, nullptr) == KF_OK);
    const char* argv[] = {KFARM_BIN, "worker"};
    REQUIRE(kf_farm_set_local_worker(farm, argv, 2) == KF_OK);
    return farm;
}

struct CwdGuard {
    std::string old = std::filesystem::current_path().string();
    explicit CwdGuard(const std::string& to) {
        std::filesystem::current_path(to);
    }
    ~CwdGuard() { std::filesystem::current_path(old); }
};

} // namespace

TEST_CASE("version and usage errors") {
    CHECK(kf_version() != nullptr);
    CHECK(std::string(kf_version()).find('.') != std::string::npos);
    CHECK(kf_farm_new(nullptr, nullptr) == KF_ERR_USAGE);
    CHECK(kf_pipe_run(2, nullptr, 0, 0, nullptr) == KF_ERR_USAGE);
    CHECK(kf_batch_status(nullptr, nullptr, nullptr) == KF_ERR_USAGE);
    CHECK(kf_last_error()[0] != '\0');
}

TEST_CASE("farm lifecycle through the C API") {
    FarmHandle fh;
    fh.farm = new_test_farm();

    int id = 0;
    REQUIRE(kf_farm_launch_local(fh.farm, &id) == KF_OK);
    CHECK(id == 1);
    REQUIRE(kf_farm_launch_local(fh.farm, &id) == KF_OK);
    CHECK(id == 2);

    int count = 0;
    REQUIRE(kf_farm_count(fh.farm, &count) == KF_OK);
    CHECK(count == 2);

    OwnedString table;
    REQUIRE(kf_farm_info_table(fh.farm, &table.s) == KF_OK);
    std::string t = table.str();
    CHECK(t.rfind("{\"ID\", \"host\", \"OS\", \"process\", \"Version\"}\n", 0) == 0);
    CHECK(std::count(t.begin(), t.end(), '\n') == 3);

    REQUIRE(kf_farm_set_global(fh.farm, "ns", "2") == KF_OK);
    REQUIRE(kf_farm_export_env(fh.farm) == KF_OK);

    OwnedString matrix;
    REQUIRE(kf_farm_eval(fh.farm, 1, "tridiag[ns, 0, 1.2, 2.1]", &matrix.s) ==
            KF_OK);
    CHECK(matrix.str() == "{{0.0, 1.2}, {2.1, 0.0}}");

    OwnedString spectrum;
    REQUIRE(kf_farm_pipeline(fh.farm, 2, &spectrum.s) == KF_OK);
    CHECK(spectrum.str().rfind("{8.41199", 0) == 0);
    CHECK(spectrum.str().find("-8.41199") != std::string::npos);

    // slave errors surface with their protocol code in the message
    OwnedString nothing;
    CHECK(kf_farm_eval(fh.farm, 1, "nosuch[1]", &nothing.s) == KF_ERR_PROTOCOL);
    CHECK(std::string(kf_last_error()).find("BADTASK") != std::string::npos);
    CHECK(kf_farm_eval(fh.farm, 99, "fill[1, 0, 0]", &nothing.s) ==
          KF_ERR_STATE);

    REQUIRE(kf_farm_close(fh.farm) == KF_OK);
    REQUIRE(kf_farm_count(fh.farm, &count) == KF_OK);
    CHECK(count == 0);

    CHECK(kf_farm_set_global(fh.farm, "not an ident", "1") ==
          KF_ERR_BAD_VALUE);
    CHECK(kf_farm_set_global(fh.farm, "x", "{1,") == KF_ERR_PARSE);
}

TEST_CASE("pipe run through the C API") {
    TempDir tmp;
    CwdGuard cwd(tmp.path());
    const char* argv[] = {KFARM_BIN, "pipe", "worker"};
    OwnedString out;
    REQUIRE(kf_pipe_run(2, argv, 3, 30.0, &out.s) == KF_OK);
    CHECK(out.str() == "{2.521827, 2.521827}");

    OwnedString bad;
    const char* missing[] = {"/nonexistent/product-worker"};
    CHECK(kf_pipe_run(2, missing, 1, 10.0, &bad.s) == KF_ERR_SPAWN);
    CHECK(kf_pipe_run(0, argv, 3, 10.0, &bad.s) == KF_ERR_BAD_VALUE);
}

TEST_CASE("batch submit and status through the C API") {
    TempDir tmp;
    CwdGuard cwd(tmp.path());
    write_file(tmp.file("job.ks"), "echo stdout\nnumbers = random_table[3]\n");

    long pid = 0;
    uint64_t seed = 7;
    REQUIRE(kf_batch_submit(tmp.file("job.ks").c_str(),
                            tmp.file("job.out").c_str(), &seed, &pid) == KF_OK);
    CHECK(pid > 0);

    std::string state;
    double elapsed = -1;
    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
    for (;;) {
        OwnedString s;
        REQUIRE(kf_batch_status(tmp.file("job.out").c_str(), &s.s, &elapsed) ==
                KF_OK);
        state = s.str();
        if (state == "done" || state == "failed" ||
            std::chrono::steady_clock::now() > deadline)
            break;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    CHECK(state == "done");
    CHECK(elapsed >= 0.0);

    OwnedString missing;
    REQUIRE(kf_batch_status("/nonexistent/job.out", &missing.s, nullptr) ==
            KF_OK);
    CHECK(missing.str() == "failed");

    CHECK(kf_batch_submit(tmp.file("absent.ks").c_str(),
                          tmp.file("x.out").c_str(), nullptr,
                          &pid) == KF_ERR_IO);
}
