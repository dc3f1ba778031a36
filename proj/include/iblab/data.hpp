#ifndef IBLAB_DATA_HPP
#define IBLAB_DATA_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <random>
#include <string>
#include <vector>

#include "iblab/loss.hpp"

namespace iblab {

enum class EntryDist { Gaussian, Rademacher };
enum class Ensemble { SubGaussian, Orthogonal, DiagonalGram, Loaded };

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;         // +-1 labels; empty for multiclass
  std::vector<int> classes;  // 0-based class labels; empty for binary
  int K = 0;

  Ensemble ensemble = Ensemble::Loaded;
  EntryDist entry = EntryDist::Gaussian;
  double v = 1.0;  // sub-Gaussian proxy, recorded not estimated
  double alpha = 0.0;
  Eigen::VectorXd lambda;
  Eigen::VectorXd dvec;
  std::uint64_t seed = 0;
  double rescale = 1.0;
  std::vector<std::string> warnings;

  int n() const { return static_cast<int>(X.rows()); }
  int d() const { return static_cast<int>(X.cols()); }
  bool multiclass() const { return !classes.empty(); }
  double max_row_norm() const { return X.rowwise().norm().maxCoeff(); }
  nlohmann::json meta() const;
};

struct EffectiveDims {
  double d2 = 0.0;
  double d_inf = 0.0;
};

// splitmix64 finalizer applied to seed + index; independent streams per trial.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

Dataset gen_subgaussian(int n, int d, const Eigen::VectorXd& lambda, EntryDist entry, std::uint64_t seed);
Dataset gen_orthogonal(int n, int d, double alpha, std::uint64_t seed);
Dataset gen_diagonal_gram(int n, int d, const Eigen::VectorXd& dvec, std::uint64_t seed);

EffectiveDims effective_dims(const Eigen::VectorXd& lambda);

MulticlassEncoding encode_multiclass(const std::vector<int>& labels, EncodingScheme scheme, int K);

// Random +-1 labels.
Eigen::VectorXd random_signs(int n, std::uint64_t seed);
// Every class appears: i mod K, then shuffled.
std::vector<int> random_classes(int n, int K, std::uint64_t seed);

// Scale X globally so the largest row norm equals cap (folded into rescale).
void rescale_rows(Dataset& ds, double cap);

void save_dataset(const Dataset& ds, const std::string& prefix);
Dataset load_dataset(const std::string& prefix);

}  // namespace iblab

#endif
