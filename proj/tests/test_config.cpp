#include <doctest.h>

#include "corgi/config.hpp"

using namespace corgi;

TEST_SUITE_BEGIN("config");

TEST_CASE("parse, defaults, and round trip") {
    const std::string text =
        "# comment\n"
        "lr_init = 5e-4\n"
        "steps = 2000\n"
        "widths = 32, 64\n"
        "use_noise = false\n"
        "name = tgv-desk # trailing comment\n";
    KeyValueConfig cfg = KeyValueConfig::parse_text(text);
    CHECK(cfg.get_double("lr_init") == doctest::Approx(5e-4));
    CHECK(cfg.get_int("steps") == 2000);
    CHECK(cfg.get_list_int("widths") == std::vector<int>{32, 64});
    CHECK(cfg.get_bool("use_noise") == false);
    CHECK(cfg.get("name") == "tgv-desk");
    CHECK(cfg.get_int_or("missing", 7) == 7);
    CHECK_THROWS_AS(cfg.get("missing"), ValidationError);
    CHECK_THROWS_AS(cfg.get_int("name"), ValidationError);

    KeyValueConfig again = KeyValueConfig::parse_text(cfg.to_text());
    CHECK(again.get_double("lr_init") == cfg.get_double("lr_init"));
    CHECK(again.get("name") == "tgv-desk");
}

TEST_CASE("malformed lines are rejected") {
    CHECK_THROWS_AS(KeyValueConfig::parse_text("just some words\n"), ValidationError);
    CHECK_THROWS_AS(KeyValueConfig::parse_text("= value\n"), ValidationError);
}

TEST_SUITE_END();
