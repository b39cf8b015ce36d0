#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kle/validate.hpp"

using namespace kle;

TEST_CASE("quick suite passes on a fresh build") {
    const auto report = run_validation(ValidationLevel::quick, 1);
    for (const auto& c : report.criteria) {
        INFO("criterion ", c.id, " ", c.name, " observed ", c.observed);
        CHECK(c.pass);
    }
    CHECK(report.all_pass);
    CHECK(report.criteria.size() == 11);
    CHECK(report.seconds < 120.0);
    const auto js = report.to_json();
    CHECK(js.find("\"pass\": true") != std::string::npos);
}

TEST_CASE("tampered tolerance fails with the criterion named") {
    const auto report = run_validation(ValidationLevel::quick, 1, 1, /*tamper=*/4);
    CHECK_FALSE(report.all_pass);
    bool found = false;
    for (const auto& c : report.criteria) {
        if (c.id == 4) {
            found = true;
            CHECK_FALSE(c.pass);
            CHECK(c.tolerance == 0.0);
            CHECK(c.note.find("tampered") != std::string::npos);
        } else {
            CHECK(c.pass);
        }
    }
    CHECK(found);
}
