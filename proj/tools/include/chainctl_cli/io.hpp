#pragma once

// State literals and trajectory dumps.
//   state: {"q": [...], "p": [...]}
//   CSV:   t,q1..qn,p1..pn,u,v

#include <iosfwd>
#include <string>

#include "chainctl/chain_dynamics.hpp"
#include "json.hpp"

namespace chainctl::io {

using Json = nlohmann::ordered_json;

ChainState state_from_json(const Json& j);
Json state_to_json(const ChainState& x);
Json state_to_json(const Eigen::VectorXd& x);

/// A path to a JSON file, or an inline literal starting with '{'.
ChainState load_state(const std::string& path_or_literal);

void write_csv_header(std::ostream& os, int n);
void write_trajectory_csv(std::ostream& os, const Trajectory& tr);

}  // namespace chainctl::io
