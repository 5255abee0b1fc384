#include "padr/core.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace padr {

namespace {

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw ParseError(std::string(what) + " contains non-finite entries");
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError("line " + std::to_string(line_no) + ": non-numeric or non-finite cell '" +
                     cell + "'");
  }
  return v;
}

}  // namespace

Dataset::Dataset(Matrix features, Matrix outcomes)
    : features_(std::move(features)), outcomes_(std::move(outcomes)) {
  if (features_.rows() < 1) throw DimensionError("n >= 1 violated");
  if (features_.rows() != outcomes_.rows())
    throw DimensionError("feature and outcome row counts differ");
  if (outcomes_.cols() < 1) throw DimensionError("m >= 1 violated");
  check_finite(features_, "features");
  check_finite(outcomes_, "outcomes");
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& ids) const {
  Matrix x(static_cast<Eigen::Index>(ids.size()), p());
  Matrix y(static_cast<Eigen::Index>(ids.size()), m());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = features_.row(ids[r]);
    y.row(static_cast<Eigen::Index>(r)) = outcomes_.row(ids[r]);
  }
  return Dataset(std::move(x), std::move(y));
}

double Dataset::max_sq_feature_norm() const {
  if (p() == 0) return 0.0;
  return features_.rowwise().squaredNorm().maxCoeff();
}

void HypothesisConfig::validate() const {
  if (d < 1) throw ConfigError("cfg.d must be >= 1");
  if (K1 < 1) throw ConfigError("cfg.K1 must be >= 1");
  if (K2 < 0) throw ConfigError("cfg.K2 must be >= 0");
  if (!(mu > 0.0) || !std::isfinite(mu)) throw ConfigError("cfg.mu must be > 0");
  if (p < 0) throw ConfigError("cfg.p must be >= 0");
}

Theta::Theta(const HypothesisConfig& cfg) : Theta(cfg, Vector::Zero(cfg.q())) {}

Theta::Theta(const HypothesisConfig& cfg, Vector flat) : cfg_(cfg), flat_(std::move(flat)) {
  cfg_.validate();
  if (flat_.size() != cfg_.q())
    throw DimensionError("theta has " + std::to_string(flat_.size()) + " entries, expected " +
                         std::to_string(cfg_.q()));
}

bool Theta::in_box(double tol) const {
  return flat_.size() == 0 || flat_.cwiseAbs().maxCoeff() <= cfg_.mu + tol;
}

Theta Theta::clamped() const {
  return Theta(cfg_, flat_.cwiseMax(-cfg_.mu).cwiseMin(cfg_.mu));
}

Theta random_init(const HypothesisConfig& cfg, Rng& rng) {
  cfg.validate();
  Vector flat(cfg.q());
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = rng.uniform(-cfg.mu, cfg.mu);
  return Theta(cfg, std::move(flat));
}

FeatureScaler FeatureScaler::fit(const Dataset& data) {
  FeatureScaler s;
  const auto& x = data.features();
  s.shift = x.colwise().mean().transpose();
  s.scale = Vector::Ones(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt((x.col(j).array() - s.shift[j]).square().mean());
    if (sd > 1e-12) s.scale[j] = sd;
  }
  return s;
}

Vector FeatureScaler::apply(const Eigen::Ref<const Vector>& x) const {
  return (x - shift).cwiseQuotient(scale);
}

Dataset FeatureScaler::apply(const Dataset& data) const {
  Matrix x = data.features();
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    x.row(r) = (x.row(r).transpose() - shift).cwiseQuotient(scale).transpose();
  return Dataset(std::move(x), data.outcomes());
}

Dataset parse_dataset_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_commas(line);
      break;
    }
  }
  if (header.empty()) throw ParseError("missing header row");
  int p = 0, m = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    const std::string expect_x = "x" + std::to_string(p + 1);
    const std::string expect_y = "y" + std::to_string(m + 1);
    if (m == 0 && h == expect_x) {
      ++p;
    } else if (h == expect_y) {
      ++m;
    } else {
      throw ParseError("header column " + std::to_string(c + 1) + " is '" + h + "', expected '" +
                       (m == 0 ? expect_x + "' or '" + expect_y : expect_y) + "'");
    }
  }
  if (m == 0) throw ParseError("header names no outcome columns y1..ym");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw DimensionError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_cell(c, line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DimensionError("n >= 1 violated: empty data section");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix x(n, p), y(n, m);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int j = 0; j < p; ++j) x(r, j) = rows[r][j];
    for (int j = 0; j < m; ++j) y(r, j) = rows[r][p + j];
  }
  return Dataset(std::move(x), std::move(y));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset_csv(read_file(path));
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return std::to_string(v);
  return std::string(buf, ptr);
}

std::string dataset_to_csv(const Dataset& data) {
  std::string out;
  for (Eigen::Index j = 0; j < data.p(); ++j) out += "x" + std::to_string(j + 1) + ",";
  for (Eigen::Index j = 0; j < data.m(); ++j)
    out += "y" + std::to_string(j + 1) + (j + 1 < data.m() ? "," : "\n");
  for (Eigen::Index r = 0; r < data.n(); ++r) {
    for (Eigen::Index j = 0; j < data.p(); ++j) out += format_double(data.features()(r, j)) + ",";
    for (Eigen::Index j = 0; j < data.m(); ++j)
      out += format_double(data.outcomes()(r, j)) + (j + 1 < data.m() ? "," : "\n");
  }
  return out;
}

std::string model_to_json(const Model& model) {
  const auto& cfg = model.theta.cfg();
  nlohmann::ordered_json j;
  j["version"] = Model::kVersion;
  j["cfg"] = {{"d", cfg.d}, {"K1", cfg.K1}, {"K2", cfg.K2}, {"mu", cfg.mu}, {"p", cfg.p}};
  const auto& f = model.theta.flat();
  j["theta_flat"] = std::vector<double>(f.data(), f.data() + f.size());
  if (model.scaler) {
    const auto& s = *model.scaler;
    j["scaler"] = {{"shift", std::vector<double>(s.shift.data(), s.shift.data() + s.shift.size())},
                   {"scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())}};
  }
  return j.dump(2) + "\n";
}

Model model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model JSON: ") + e.what());
  }
  try {
    const int version = j.at("version").get<int>();
    if (version != Model::kVersion)
      throw ParseError("unsupported model version " + std::to_string(version));
    HypothesisConfig cfg;
    const auto& c = j.at("cfg");
    cfg.d = c.at("d").get<int>();
    cfg.K1 = c.at("K1").get<int>();
    cfg.K2 = c.at("K2").get<int>();
    cfg.mu = c.at("mu").get<double>();
    cfg.p = c.at("p").get<int>();
    auto flat = j.at("theta_flat").get<std::vector<double>>();
    Model model{Theta(cfg, Eigen::Map<Vector>(flat.data(), static_cast<Eigen::Index>(flat.size()))),
                std::nullopt};
    if (j.contains("scaler")) {
      auto shift = j["scaler"].at("shift").get<std::vector<double>>();
      auto scale = j["scaler"].at("scale").get<std::vector<double>>();
      if (shift.size() != static_cast<std::size_t>(cfg.p) || scale.size() != shift.size())
        throw DimensionError("scaler length does not match cfg.p");
      model.scaler = FeatureScaler{
          Eigen::Map<Vector>(shift.data(), static_cast<Eigen::Index>(shift.size())),
          Eigen::Map<Vector>(scale.data(), static_cast<Eigen::Index>(scale.size()))};
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model JSON: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw Error("write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("rename to " + path.string() + " failed: " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace padr
