#include <catch2/catch_amalgamated.hpp>
#include <cfaburst/cfaburst.hpp>
