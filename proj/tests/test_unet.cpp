#include <doctest.h>

TEST_SUITE_BEGIN("unet");
TEST_SUITE_END();
