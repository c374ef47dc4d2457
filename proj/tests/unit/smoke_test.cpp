#include <gtest/gtest.h>

#include "rns/limit_lab.hpp"
#include "rns/initial_data.hpp"
#include "rns/snapshot_io.hpp"

TEST(Smoke, Compiles) { SUCCEED(); }
