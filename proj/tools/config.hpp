#pragma once

#include <json.hpp>
#include <string>

#include "slidecraft/control.hpp"
#include "slidecraft/model.hpp"
#include "slidecraft/optimizer.hpp"
#include "slidecraft/sim.hpp"

namespace slidecraft::app {

using Json = nlohmann::ordered_json;

struct ProblemBundle {
  std::string name;
  HybridSystem sys;
  ControlGrid u0;
  AlgoParams algo;
  SimConfig sim;
  unsigned seed = 0;
};

/// Validates the whole document before building anything. Schema problems
/// raise ConfigError with the JSON path; expression errors keep their code
/// and gain the field name.
ProblemBundle parse_problem(const Json& doc);

std::string read_file(const std::string& path);
ProblemBundle load_problem(const std::string& path);

}  // namespace slidecraft::app
