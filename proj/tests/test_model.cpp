#include <doctest.h>

TEST_SUITE_BEGIN("model");
TEST_SUITE_END();
