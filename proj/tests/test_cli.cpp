#include <catch2/catch_amalgamated.hpp>
#include "rgmwm/rgmwm.hpp"
