#include <doctest.h>

TEST_SUITE("config") {

}  // TEST_SUITE
