#include <charconv>
#include <string>

#include "bridgeflow/cli.hpp"

namespace bridgeflow::cli {

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string epsilon_tag(double eps) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), eps);
  return "eps_" + std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : columns_(header.size()), path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error(ErrorKind::Config, "cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != columns_) {
    throw Error(ErrorKind::InvalidArgument, path_.string() + ": row has " +
                                                std::to_string(values.size()) + " values, header " +
                                                std::to_string(columns_));
  }
  for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_double(values[i]);
  out_ << '\n';
}

GridDensity read_density_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open density " + path.string());
  GridDensity rho;
  std::string line;
  int line_no = 0;
  auto bad = [&](const std::string& what) {
    throw Error(ErrorKind::Config, path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  auto parse = [&](std::string_view field) {
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
      bad("not a number: \"" + std::string(field) + "\"");
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line.rfind("x,rho", 0) != 0) bad("expected header \"x,rho\"");
      continue;
    }
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      bad("expected two columns");
    }
    const std::string_view view(line);
    rho.points.push_back(parse(view.substr(0, comma)));
    rho.weights.push_back(parse(view.substr(comma + 1)));
  }
  try {
    rho.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return rho;
}

}  // namespace bridgeflow::cli
