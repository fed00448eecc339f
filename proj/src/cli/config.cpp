#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bridgeflow/builtin_densities.hpp"
#include "bridgeflow/cli.hpp"

namespace bridgeflow::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::Config, where + ": " + what);
}

// Walks a parsed document while tracking the JSON pointer for messages.
class Node {
 public:
  Node(const json& value, std::string pointer, const std::string& source)
      : v_(value), ptr_(std::move(pointer)), src_(source) {}

  std::string where() const { return src_ + ": " + (ptr_.empty() ? "/" : ptr_); }
  [[noreturn]] void error(const std::string& what) const { fail(where(), what); }

  bool has(const std::string& key) const { return v_.is_object() && v_.contains(key); }
  Node at(const std::string& key) const {
    if (!v_.is_object()) error("expected an object");
    if (!v_.contains(key)) error("missing key \"" + key + "\"");
    return Node(v_.at(key), ptr_ + "/" + key, src_);
  }
  Node at(std::size_t i) const { return Node(v_.at(i), ptr_ + "/" + std::to_string(i), src_); }
  std::size_t size() const {
    if (!v_.is_array()) error("expected an array");
    return v_.size();
  }
  bool is_array() const { return v_.is_array(); }

  double number() const {
    if (!v_.is_number()) error("expected a number");
    return v_.get<double>();
  }
  long long integer() const {
    if (!v_.is_number_integer()) error("expected an integer");
    return v_.get<long long>();
  }
  std::string string() const {
    if (!v_.is_string()) error("expected a string");
    return v_.get<std::string>();
  }
  std::vector<double> numbers() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).number());
    return out;
  }
  Eigen::MatrixXd matrix() const {
    const std::size_t rows = size();
    if (rows == 0) error("empty matrix");
    const std::size_t cols = at(0).size();
    if (cols == 0) error("empty matrix row");
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      const Node row = at(i);
      if (row.size() != cols) row.error("ragged matrix: expected " + std::to_string(cols) + " entries");
      for (std::size_t j = 0; j < cols; ++j) m(i, j) = row.at(j).number();
    }
    return m;
  }

  void only_keys(std::initializer_list<const char*> keys) const {
    if (!v_.is_object()) error("expected an object");
    for (const auto& [k, _] : v_.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* allowed) { return k == allowed; })) {
        error("unknown key \"" + k + "\"");
      }
    }
  }

 private:
  const json& v_;
  std::string ptr_;
  const std::string& src_;
};

MatrixFunction matrix_function(const Node& n) {
  n.only_keys({"constant", "grid", "values"});
  if (n.has("constant")) {
    if (n.has("grid") || n.has("values")) n.error("use either \"constant\" or \"grid\"+\"values\"");
    return MatrixFunction::constant(n.at("constant").matrix());
  }
  const Node values = n.at("values");
  std::vector<Eigen::MatrixXd> mats;
  for (std::size_t i = 0; i < values.size(); ++i) mats.push_back(values.at(i).matrix());
  try {
    return MatrixFunction::tabulated(n.at("grid").numbers(), std::move(mats));
  } catch (const Error& e) {
    n.error(e.what());
  }
}

GaussianState gaussian_state(const Node& n) {
  n.only_keys({"mean", "cov"});
  const std::vector<double> mean = n.at("mean").numbers();
  GaussianState s{Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                  n.at("cov").matrix()};
  return s;
}

GridDensity grid_density(const Node& n, const std::filesystem::path& base, int grid) {
  n.only_keys({"builtin", "csv"});
  if (n.has("builtin") == n.has("csv")) n.error("give exactly one of \"builtin\" or \"csv\"");
  if (n.has("builtin")) {
    const std::string name = n.at("builtin").string();
    if (auto rho = builtin_density(name, grid)) return *rho;
    n.at("builtin").error("unknown built-in density \"" + name + "\"");
  }
  const std::filesystem::path file = base / n.at("csv").string();
  if (!std::filesystem::exists(file)) n.at("csv").error("file not found: " + file.string());
  return read_density_csv(file);
}

int positive_int(const Node& n) {
  const long long v = n.integer();
  if (v < 1 || v > 100000000) n.error("expected a positive integer");
  return static_cast<int>(v);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              const Overrides& overrides, const std::string& source_name) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into line and column.
    const std::size_t at = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at), '\n');
    const std::size_t nl = text.rfind('\n', at == 0 ? 0 : at - 1);
    const std::size_t col = (nl == std::string::npos || at == 0) ? at + 1 : at - nl;
    std::string msg = e.what();
    if (const auto pos = msg.find("syntax error"); pos != std::string::npos) msg = msg.substr(pos);
    throw Error(ErrorKind::Config, source_name + ":" + std::to_string(line) + ":" +
                                       std::to_string(col) + ": " + msg);
  }
  const Node root(doc, "", source_name);
  root.only_keys({"system", "marginals", "epsilon", "steps", "grid", "paths", "sample_steps",
                  "eval_points", "seed", "tol", "t_star", "times", "output"});

  ExperimentConfig cfg;
  cfg.source = source_name;
  if (root.has("steps")) cfg.steps = positive_int(root.at("steps"));
  if (root.has("grid")) cfg.grid = positive_int(root.at("grid"));
  if (root.has("paths")) {
    const long long p = root.at("paths").integer();
    if (p < 0) root.at("paths").error("expected a non-negative integer");
    cfg.paths = static_cast<int>(p);
  }
  if (root.has("sample_steps")) cfg.sample_steps = positive_int(root.at("sample_steps"));
  if (root.has("eval_points")) cfg.eval_points = positive_int(root.at("eval_points"));
  if (root.has("seed")) {
    const long long s = root.at("seed").integer();
    if (s < 0) root.at("seed").error("expected a non-negative integer");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  if (root.has("tol")) cfg.tol = root.at("tol").number();
  if (root.has("t_star")) cfg.t_star = root.at("t_star").number();
  if (root.has("epsilon")) cfg.epsilon = root.at("epsilon").numbers();
  if (root.has("times")) {
    cfg.times = root.at("times").numbers();
  } else {
    for (int k = 0; k <= 10; ++k) cfg.times.push_back(k / 10.0);
  }
  cfg.output_dir = base_dir / (root.has("output") ? root.at("output").string() : std::string("out"));

  if (overrides.out) cfg.output_dir = *overrides.out;
  if (!overrides.epsilon.empty()) cfg.epsilon = overrides.epsilon;
  if (overrides.steps) cfg.steps = *overrides.steps;
  if (overrides.grid) cfg.grid = *overrides.grid;
  if (overrides.paths) cfg.paths = *overrides.paths;
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.tol) cfg.tol = *overrides.tol;

  for (double e : cfg.epsilon) {
    if (!(e >= 0.0) || !std::isfinite(e)) fail(source_name + ": /epsilon", "values must be >= 0");
  }
  if (!(cfg.tol > 0.0)) fail(source_name + ": /tol", "must be positive");
  if (!(cfg.t_star > 0.0 && cfg.t_star < 1.0)) fail(source_name + ": /t_star", "must lie in (0,1)");
  if (cfg.steps < 4) fail(source_name + ": /steps", "must be >= 4");
  if (cfg.grid < 2) fail(source_name + ": /grid", "must be >= 2");
  for (double t : cfg.times) {
    if (!(t >= 0.0 && t <= 1.0)) fail(source_name + ": /times", "values must lie in [0,1]");
  }

  const Node sys = root.at("system");
  sys.only_keys({"A", "B"});
  try {
    cfg.system.emplace(matrix_function(sys.at("A")), matrix_function(sys.at("B")));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    sys.error(e.what());
  }
  const int n = cfg.system->dim_state();

  const Node marg = root.at("marginals");
  marg.only_keys({"gaussian", "grid1d"});
  if (marg.has("gaussian") == marg.has("grid1d")) {
    marg.error("give exactly one marginal mode: \"gaussian\" or \"grid1d\"");
  }
  if (marg.has("gaussian")) {
    const Node g = marg.at("gaussian");
    g.only_keys({"initial", "final"});
    GaussianMarginals gm{gaussian_state(g.at("initial")), gaussian_state(g.at("final"))};
    try {
      gm.initial.validate(n);
    } catch (const Error& e) {
      g.at("initial").error(e.what());
    }
    try {
      gm.final.validate(n);
    } catch (const Error& e) {
      g.at("final").error(e.what());
    }
    cfg.gaussian = std::move(gm);
  } else {
    const Node g = marg.at("grid1d");
    if (n != 1) g.error("grid1d marginals need a scalar system");
    g.only_keys({"initial", "final"});
    cfg.grid1d = GridMarginals{grid_density(g.at("initial"), base_dir, cfg.grid),
                               grid_density(g.at("final"), base_dir, cfg.grid)};
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : ".";
  return parse_config(buf.str(), base, overrides, path.string());
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::InvalidArgument:
    case ErrorKind::NonControllable:
    case ErrorKind::EmptySupport:
    case ErrorKind::MassMismatch:
    case ErrorKind::OutOfRange:
      return 2;
    default:
      return 1;
  }
}

}  // namespace bridgeflow::cli
