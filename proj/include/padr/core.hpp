#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "padr/rng.hpp"

namespace padr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Errors. The CLI maps ConfigError to exit status 2 and every other Error to 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error {
  using Error::Error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct SolverError : Error {
  using Error::Error;
};

/// Sample set {(x^s, y^s)}: n rows of p features and m outcomes.
class Dataset {
public:
  Dataset(Matrix features, Matrix outcomes);

  const Matrix& features() const { return features_; }
  const Matrix& outcomes() const { return outcomes_; }
  Eigen::Index n() const { return features_.rows(); }
  Eigen::Index p() const { return features_.cols(); }
  Eigen::Index m() const { return outcomes_.cols(); }

  /// Rows `ids`, in order, duplicates allowed.
  Dataset subset(const std::vector<Eigen::Index>& ids) const;

  /// max_s ||x^s||_2^2
  double max_sq_feature_norm() const;

private:
  Matrix features_;
  Matrix outcomes_;
};

/// PADR(K1, K2) hypothesis class with d outputs over p features, box [-mu, mu].
struct HypothesisConfig {
  int d = 1;
  int K1 = 1;
  int K2 = 0;
  double mu = 50.0;
  int p = 0;

  void validate() const;
  int pieces() const { return K1 + K2; }
  int block() const { return p + 1; }
  Eigen::Index q() const { return static_cast<Eigen::Index>(d) * pieces() * block(); }
  /// Offset of piece `j` of output `out` in the flat parameter vector. Pieces
  /// 0..K1-1 belong to the first max-affine component, K1..K1+K2-1 to the second.
  Eigen::Index offset(int out, int j) const {
    return (static_cast<Eigen::Index>(out) * pieces() + j) * block();
  }
  bool operator==(const HypothesisConfig&) const = default;
};

/// All PADR parameters. Flat layout per output: K1 blocks (alpha^k, a^k) then
/// K2 blocks (beta^k, b^k), each block of length p + 1 with the intercept last.
class Theta {
public:
  Theta() : Theta(HypothesisConfig{}) {}
  explicit Theta(const HypothesisConfig& cfg);
  Theta(const HypothesisConfig& cfg, Vector flat);

  const HypothesisConfig& cfg() const { return cfg_; }
  const Vector& flat() const { return flat_; }

  auto alpha(int out, int k) const { return flat_.segment(cfg_.offset(out, k), cfg_.p); }
  double a(int out, int k) const { return flat_[cfg_.offset(out, k) + cfg_.p]; }
  auto beta(int out, int k) const { return flat_.segment(cfg_.offset(out, cfg_.K1 + k), cfg_.p); }
  double b(int out, int k) const { return flat_[cfg_.offset(out, cfg_.K1 + k) + cfg_.p]; }

  bool in_box(double tol = 0.0) const;
  Theta clamped() const;

private:
  HypothesisConfig cfg_;
  Vector flat_;
};

/// Each parameter i.i.d. uniform on [-mu, mu].
Theta random_init(const HypothesisConfig& cfg, Rng& rng);

/// Optional affine feature transform x -> (x - shift) ./ scale, stored with a model.
struct FeatureScaler {
  Vector shift;
  Vector scale;

  static FeatureScaler fit(const Dataset& data);
  Vector apply(const Eigen::Ref<const Vector>& x) const;
  Dataset apply(const Dataset& data) const;
};

struct Model {
  static constexpr int kVersion = 1;
  Theta theta;
  std::optional<FeatureScaler> scaler;
};

// CSV with header x1..xp,y1..ym. `p` is inferred from the header.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset_csv(const std::string& text);
std::string dataset_to_csv(const Dataset& data);

std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);

/// Writes via a temporary file and rename so readers never see partial output.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace padr
