#include "iblab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "iblab/errors.hpp"

namespace iblab {

namespace {

const char* ensemble_name(Ensemble e) {
  switch (e) {
    case Ensemble::SubGaussian: return "subgaussian";
    case Ensemble::Orthogonal: return "orthogonal";
    case Ensemble::DiagonalGram: return "diagonal_gram";
    case Ensemble::Loaded: return "loaded";
  }
  return "?";
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd gaussian_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = N(rng);
  return M;
}

// n x d matrix with orthonormal rows.
Eigen::MatrixXd orthonormal_rows(int n, int d, std::mt19937_64& rng) {
  Eigen::MatrixXd A = gaussian_matrix(d, n, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::VectorXd rdiag = qr.matrixQR().diagonal().cwiseAbs();
  if (rdiag.minCoeff() <= 1e-10 * rdiag.maxCoeff())
    throw Error(ErrorKind::DegenerateData, "random matrix is rank deficient");
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, n);
  return Q.transpose();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Eigen::VectorXd random_signs(int n, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x1abe1));
  std::bernoulli_distribution B(0.5);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = B(rng) ? 1.0 : -1.0;
  return y;
}

std::vector<int> random_classes(int n, int K, std::uint64_t seed) {
  if (K < 1 || n < K) throw Error(ErrorKind::InvalidParameter, "need n >= K >= 1 to cover every class");
  std::vector<int> c(n);
  for (int i = 0; i < n; ++i) c[i] = i % K;
  std::mt19937_64 rng(derive_seed(seed, 0xc1a55));
  std::shuffle(c.begin(), c.end(), rng);
  return c;
}

Dataset gen_subgaussian(int n, int d, const Eigen::VectorXd& lambda, EntryDist entry, std::uint64_t seed) {
  if (n < 1 || d < 1) throw Error(ErrorKind::InvalidParameter, "need n >= 1 and d >= 1");
  if (lambda.size() != d) throw Error(ErrorKind::InvalidParameter, "spectrum length must equal d");
  if (lambda.minCoeff() < 0) throw Error(ErrorKind::InvalidParameter, "spectrum must be nonnegative");
  if (lambda.maxCoeff() <= 0) throw Error(ErrorKind::InvalidParameter, "spectrum is all zero");
  Dataset ds;
  ds.ensemble = Ensemble::SubGaussian;
  ds.entry = entry;
  ds.lambda = lambda;
  ds.seed = seed;
  if (n > d) ds.warnings.push_back("n > d: the Gram matrix is singular");
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd Z(n, d);
  if (entry == EntryDist::Gaussian) {
    Z = gaussian_matrix(n, d, rng);
  } else {
    std::bernoulli_distribution B(0.5);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) Z(i, j) = B(rng) ? 1.0 : -1.0;
  }
  ds.X = Z * lambda.cwiseSqrt().asDiagonal();
  double mx = ds.max_row_norm();
  if (!(mx > 0)) throw Error(ErrorKind::DegenerateData, "all rows are zero");
  ds.rescale = 1.0 / mx;
  ds.X *= ds.rescale;
  ds.y = random_signs(n, seed);
  return ds;
}

Dataset gen_orthogonal(int n, int d, double alpha, std::uint64_t seed) {
  if (n < 1 || d < n) throw Error(ErrorKind::InvalidParameter, "orthogonal design needs d >= n >= 1");
  if (!(alpha > 0)) throw Error(ErrorKind::InvalidParameter, "alpha must be positive");
  if (alpha > 1) throw Error(ErrorKind::NormalizationViolation, "alpha > 1 puts row norms above 1");
  Dataset ds;
  ds.ensemble = Ensemble::Orthogonal;
  ds.alpha = alpha;
  ds.seed = seed;
  std::mt19937_64 rng(seed);
  ds.X = std::sqrt(alpha) * orthonormal_rows(n, d, rng);
  ds.y = random_signs(n, seed);
  return ds;
}

Dataset gen_diagonal_gram(int n, int d, const Eigen::VectorXd& dvec, std::uint64_t seed) {
  if (n < 1 || d < n) throw Error(ErrorKind::InvalidParameter, "diagonal Gram design needs d >= n >= 1");
  if (dvec.size() != n) throw Error(ErrorKind::InvalidParameter, "dvec length must equal n");
  if (dvec.minCoeff() <= 0 || dvec.maxCoeff() > 1)
    throw Error(ErrorKind::InvalidParameter, "dvec entries must lie in (0, 1]");
  Dataset ds;
  ds.ensemble = Ensemble::DiagonalGram;
  ds.dvec = dvec;
  ds.seed = seed;
  std::mt19937_64 rng(seed);
  ds.X = dvec.cwiseSqrt().asDiagonal() * orthonormal_rows(n, d, rng);
  ds.y = random_signs(n, seed);
  return ds;
}

EffectiveDims effective_dims(const Eigen::VectorXd& lambda) {
  if (lambda.size() == 0 || lambda.minCoeff() < 0 || lambda.maxCoeff() <= 0)
    throw Error(ErrorKind::InvalidParameter, "spectrum must be nonnegative and not all zero");
  double l1 = lambda.sum();
  return {l1 * l1 / lambda.squaredNorm(), l1 / lambda.maxCoeff()};
}

MulticlassEncoding encode_multiclass(const std::vector<int>& labels, EncodingScheme scheme, int K) {
  if (K < 2) throw Error(ErrorKind::InvalidParameter, "multiclass encoding needs K >= 2");
  const int n = static_cast<int>(labels.size());
  std::vector<int> count(K, 0);
  for (int c : labels) {
    if (c < 0 || c >= K) throw Error(ErrorKind::InvalidDataset, "label " + std::to_string(c) + " outside [0, K)");
    ++count[c];
  }
  for (int k = 0; k < K; ++k)
    if (count[k] == 0) throw Error(ErrorKind::InvalidDataset, "class " + std::to_string(k) + " has no examples");
  MulticlassEncoding enc;
  enc.K = K;
  enc.scheme = scheme;
  if (scheme == EncodingScheme::Simplex) {
    enc.a = (K - 1.0) / K;
    enc.b = 1.0 / K;
  }
  enc.labels = labels;
  enc.C.resize(K, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) enc.C(k, i) = k == labels[i] ? enc.a : -enc.b;
  return enc;
}

void rescale_rows(Dataset& ds, double cap) {
  double mx = ds.max_row_norm();
  if (!(mx > 0)) throw Error(ErrorKind::DegenerateData, "all rows are zero");
  ds.X *= cap / mx;
  ds.rescale *= cap / mx;
}

nlohmann::json Dataset::meta() const {
  nlohmann::json j;
  j["schema_version"] = "1";
  j["ensemble"] = ensemble_name(ensemble);
  j["n"] = n();
  j["d"] = d();
  j["seed"] = seed;
  j["rescale"] = rescale;
  j["v"] = v;
  j["entry"] = entry == EntryDist::Gaussian ? "gaussian" : "rademacher";
  if (alpha > 0) j["alpha"] = alpha;
  if (lambda.size()) j["lambda"] = to_std(lambda);
  if (dvec.size()) j["dvec"] = to_std(dvec);
  j["label_kind"] = multiclass() ? "class" : "binary";
  if (multiclass()) j["K"] = K;
  j["warnings"] = warnings;
  return j;
}

void save_dataset(const Dataset& ds, const std::string& prefix) {
  std::ofstream csv(prefix + ".csv");
  if (!csv) throw Error(ErrorKind::Io, "cannot write " + prefix + ".csv");
  char buf[32];
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < ds.d(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.X(i, j));
      csv << buf << ',';
    }
    if (ds.multiclass())
      csv << ds.classes[i] << '\n';
    else
      csv << (ds.y.size() ? static_cast<int>(ds.y[i]) : 0) << '\n';
  }
  std::ofstream meta(prefix + ".meta.json");
  if (!meta) throw Error(ErrorKind::Io, "cannot write " + prefix + ".meta.json");
  meta << ds.meta().dump(2) << '\n';
}

Dataset load_dataset(const std::string& prefix) {
  std::ifstream meta_in(prefix + ".meta.json");
  if (!meta_in) throw Error(ErrorKind::Io, "cannot read " + prefix + ".meta.json");
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Io, std::string("bad metadata: ") + e.what());
  }
  std::ifstream csv(prefix + ".csv");
  if (!csv) throw Error(ErrorKind::Io, "cannot read " + prefix + ".csv");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows[0].size()) throw Error(ErrorKind::Io, "ragged CSV");
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows[0].size() < 2) throw Error(ErrorKind::Io, "empty dataset");
  const int n = static_cast<int>(rows.size()), d = static_cast<int>(rows[0].size()) - 1;
  Dataset ds;
  ds.X.resize(n, d);
  std::vector<double> lab(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) ds.X(i, j) = rows[i][j];
    lab[i] = rows[i][d];
  }
  if (meta.value("label_kind", "binary") == "class") {
    ds.K = meta.at("K").get<int>();
    for (double c : lab) ds.classes.push_back(static_cast<int>(c));
  } else {
    ds.y = from_std(lab);
  }
  const std::string ens = meta.value("ensemble", "loaded");
  ds.ensemble = ens == "subgaussian" ? Ensemble::SubGaussian
                : ens == "orthogonal" ? Ensemble::Orthogonal
                : ens == "diagonal_gram" ? Ensemble::DiagonalGram
                                          : Ensemble::Loaded;
  ds.entry = meta.value("entry", "gaussian") == "rademacher" ? EntryDist::Rademacher : EntryDist::Gaussian;
  ds.seed = meta.value("seed", std::uint64_t{0});
  ds.rescale = meta.value("rescale", 1.0);
  ds.v = meta.value("v", 1.0);
  ds.alpha = meta.value("alpha", 0.0);
  if (meta.contains("lambda")) ds.lambda = from_std(meta["lambda"].get<std::vector<double>>());
  if (meta.contains("dvec")) ds.dvec = from_std(meta["dvec"].get<std::vector<double>>());
  return ds;
}

}  // namespace iblab
