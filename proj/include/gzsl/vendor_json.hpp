#pragma once

#include "json.hpp"  // nlohmann/json, vendored
