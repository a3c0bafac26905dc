#include <doctest.h>

TEST_SUITE_BEGIN("encoding");
TEST_SUITE_END();
