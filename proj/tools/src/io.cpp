#include "chainctl_cli/io.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "chainctl/errors.hpp"

namespace chainctl::io {

ChainState state_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("q") || !j.contains("p")) {
    throw ValidationError(R"(state must be an object {"q": [...], "p": [...]})");
  }
  auto read = [](const Json& a, const char* key) {
    if (!a.is_array()) throw ValidationError(std::string("state field '") + key + "' must be an array");
    std::vector<double> v;
    for (const auto& e : a) {
      if (!e.is_number()) throw ValidationError(std::string("state field '") + key + "' must hold numbers");
      v.push_back(e.get<double>());
    }
    return v;
  };
  ChainState x(read(j.at("q"), "q"), read(j.at("p"), "p"));
  x.validate();
  return x;
}

Json state_to_json(const ChainState& x) {
  Json j;
  j["q"] = x.q;
  j["p"] = x.p;
  return j;
}

Json state_to_json(const Eigen::VectorXd& x) { return state_to_json(ChainState::from_vector(x)); }

ChainState load_state(const std::string& src) {
  Json j;
  try {
    if (!src.empty() && src.front() == '{') {
      j = Json::parse(src);
    } else {
      std::ifstream in(src);
      if (!in) throw ValidationError("cannot open state file '" + src + "'");
      j = Json::parse(in);
    }
  } catch (const Json::parse_error& e) {
    throw ValidationError("state '" + src + "' is not valid JSON: " + e.what());
  }
  return state_from_json(j);
}

void write_csv_header(std::ostream& os, int n) {
  os << "t";
  for (int k = 1; k <= n; ++k) os << ",q" << k;
  for (int k = 1; k <= n; ++k) os << ",p" << k;
  os << ",u,v\n";
}

void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  write_csv_header(os, tr.n);
  std::ostringstream line;
  line << std::setprecision(17);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    line.str("");
    line << tr.t[i];
    for (int k = 0; k < tr.x[i].size(); ++k) line << ',' << tr.x[i][k];
    line << ',' << tr.u[i] << ',' << tr.v[i] << '\n';
    os << line.str();
  }
}

}  // namespace chainctl::io
