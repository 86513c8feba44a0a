#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "trendscope/embedding.hpp"

namespace trendscope {

struct Neighbor {
  std::string item_id;
  std::size_t row = 0;
  double distance = 0.0;
};

struct Canopy {
  std::size_t center = 0;            // row / position of the center item
  std::vector<std::size_t> members;  // ascending, includes the center
};

inline constexpr double kDefaultTightThreshold = 0.15;
inline constexpr double kDefaultLooseThreshold = 0.2;

/// Read-only memory mapping of a whole file.
class MappedFile {
 public:
  explicit MappedFile(const std::filesystem::path& path);
  ~MappedFile();
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  std::span<const std::byte> bytes() const { return {static_cast<const std::byte*>(data_), size_}; }

 private:
  void* data_ = nullptr;
  std::size_t size_ = 0;
};

/// Flat vector store with exact nearest-neighbor search. Items are added,
/// then the index is sealed; after sealing it is immutable and safe to
/// query from any number of threads.
template <typename Scalar>
class FlatIndex {
 public:
  using Vector = EmbeddingVector<Scalar>;
  using ConstMatrixMap = Eigen::Map<const EmbeddingMatrix<Scalar>>;

  FlatIndex() = default;
  explicit FlatIndex(int dim) : dim_(dim) {
    if (dim <= 0) throw Error("index dimension must be positive");
  }

  template <typename Derived>
  void add(std::string item_id, const Eigen::MatrixBase<Derived>& v) {
    if (sealed_) throw Error("cannot add to a sealed index");
    if (dim_ == 0) dim_ = static_cast<int>(v.size());
    if (v.size() != dim_) throw Error("embedding dimension mismatch on add");
    if (!is_unit_norm(v)) throw Error("index items must be unit-norm: " + item_id);
    if (!seen_.insert(item_id).second) throw Error("duplicate item id: " + item_id);
    const auto cast = v.template cast<Scalar>().eval();
    staging_.insert(staging_.end(), cast.data(), cast.data() + cast.size());
    ids_.push_back(std::move(item_id));
  }

  /// Bulk build from a column-per-item matrix.
  static FlatIndex from_matrix(std::vector<std::string> ids, EmbeddingMatrix<Scalar> vectors) {
    if (static_cast<Eigen::Index>(ids.size()) != vectors.cols())
      throw Error("id count does not match vector count");
    FlatIndex index(static_cast<int>(vectors.rows()));
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
      if (!is_unit_norm(vectors.col(c))) throw Error("index items must be unit-norm: " + ids[c]);
      if (!index.seen_.insert(ids[c]).second) throw Error("duplicate item id: " + ids[c]);
    }
    index.ids_ = std::move(ids);
    index.owned_ = std::move(vectors);
    index.sealed_ = true;
    return index;
  }

  void seal() {
    if (sealed_) return;
    owned_ = Eigen::Map<const EmbeddingMatrix<Scalar>>(staging_.data(), dim_,
                                                       static_cast<Eigen::Index>(ids_.size()));
    staging_.clear();
    staging_.shrink_to_fit();
    sealed_ = true;
  }

  bool sealed() const { return sealed_; }
  int dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(std::size_t row) const { return ids_.at(row); }

  ConstMatrixMap vectors() const {
    require_sealed();
    if (mapped_) return ConstMatrixMap(mapped_data_, dim_, static_cast<Eigen::Index>(ids_.size()));
    return ConstMatrixMap(owned_.data(), owned_.rows(), owned_.cols());
  }

  auto vector(std::size_t row) const { return vectors().col(static_cast<Eigen::Index>(row)); }

  /// Exact k nearest items by cosine distance, ascending by (distance, id).
  /// Returns every item when k exceeds the index size.
  template <typename Derived>
  std::vector<Neighbor> knn(const Eigen::MatrixBase<Derived>& query, std::size_t k) const {
    require_sealed();
    if (k == 0) throw Error("k must be at least 1");
    if (ids_.empty()) return {};
    if (query.size() != dim_) throw Error("query dimension mismatch");
    const Vector q = query.template cast<Scalar>();
    const auto all = vectors();
    std::vector<std::pair<double, std::size_t>> scored(ids_.size());
    for (std::size_t r = 0; r < ids_.size(); ++r) {
      scored[r] = {std::min(2.0, detail::half_sq_distance(all.col(r).data(), q.data(), dim_)), r};
    }
    auto less = [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return ids_[a.second] < ids_[b.second];
    };
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end(), less);
    std::vector<Neighbor> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
      out.push_back(Neighbor{ids_[scored[i].second], scored[i].second, scored[i].first});
    return out;
  }

  /// Writes the vector file (little-endian float32, header with dim and
  /// count) and the newline-delimited id sidecar.
  void save(const std::filesystem::path& vector_file, const std::filesystem::path& id_file) const;

  /// Opens a saved index; vectors stay memory-mapped read-only.
  static FlatIndex open(const std::filesystem::path& vector_file,
                        const std::filesystem::path& id_file);

 private:
  void require_sealed() const {
    if (!sealed_) throw Error("index must be sealed before reads");
  }

  int dim_ = 0;
  bool sealed_ = false;
  std::vector<std::string> ids_;
  std::unordered_set<std::string> seen_;
  std::vector<Scalar> staging_;
  EmbeddingMatrix<Scalar> owned_;
  std::shared_ptr<MappedFile> mapping_;
  bool mapped_ = false;
  const Scalar* mapped_data_ = nullptr;
};

inline constexpr char kVectorFileMagic[4] = {'T', 'S', 'V', 'F'};
inline constexpr std::uint32_t kVectorFileVersion = 1;
inline constexpr std::size_t kVectorFileHeaderBytes = 4 + 4 + 4 + 8 + 4;  // + pad to 24

template <typename Scalar>
void FlatIndex<Scalar>::save(const std::filesystem::path& vector_file,
                             const std::filesystem::path& id_file) const {
  static_assert(std::endian::native == std::endian::little, "vector files are little-endian");
  require_sealed();
  std::string blob(kVectorFileHeaderBytes, '\0');
  const std::uint32_t dim = static_cast<std::uint32_t>(dim_);
  const std::uint64_t count = ids_.size();
  std::memcpy(blob.data(), kVectorFileMagic, 4);
  std::memcpy(blob.data() + 4, &kVectorFileVersion, 4);
  std::memcpy(blob.data() + 8, &dim, 4);
  std::memcpy(blob.data() + 12, &count, 8);
  const Eigen::MatrixXf as_float = vectors().template cast<float>();
  blob.append(reinterpret_cast<const char*>(as_float.data()), as_float.size() * sizeof(float));
  write_file_atomic(vector_file, blob);
  std::string ids;
  for (const auto& id : ids_) {
    if (id.find('\n') != std::string::npos) throw Error("item id contains a newline: " + id);
    ids += id;
    ids += '\n';
  }
  write_file_atomic(id_file, ids);
}

template <typename Scalar>
FlatIndex<Scalar> FlatIndex<Scalar>::open(const std::filesystem::path& vector_file,
                                          const std::filesystem::path& id_file) {
  auto mapping = std::make_shared<MappedFile>(vector_file);
  const auto bytes = mapping->bytes();
  if (bytes.size() < kVectorFileHeaderBytes || std::memcmp(bytes.data(), kVectorFileMagic, 4) != 0)
    throw Error("not a vector file: " + vector_file.string());
  std::uint32_t version = 0, dim = 0;
  std::uint64_t count = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&dim, bytes.data() + 8, 4);
  std::memcpy(&count, bytes.data() + 12, 8);
  if (version != kVectorFileVersion) throw Error("unsupported vector file version");
  if (bytes.size() != kVectorFileHeaderBytes + count * dim * sizeof(float))
    throw Error("vector file size does not match header: " + vector_file.string());

  std::vector<std::string> ids;
  {
    std::ifstream in(id_file);
    if (!in) throw Error("cannot open id map " + id_file.string());
    std::string line;
    while (std::getline(in, line)) ids.push_back(line);
  }
  if (ids.size() != count) throw Error("id map row count does not match vector file");

  FlatIndex index(static_cast<int>(dim));
  for (const auto& id : ids)
    if (!index.seen_.insert(id).second) throw Error("duplicate item id in id map: " + id);
  index.ids_ = std::move(ids);
  const auto* data = reinterpret_cast<const float*>(bytes.data() + kVectorFileHeaderBytes);
  if constexpr (std::is_same_v<Scalar, float>) {
    index.mapping_ = std::move(mapping);
    index.mapped_data_ = data;
    index.mapped_ = true;
  } else {
    index.owned_ = Eigen::Map<const Eigen::MatrixXf>(data, dim, static_cast<Eigen::Index>(count))
                       .template cast<Scalar>();
  }
  index.sealed_ = true;
  return index;
}

/// Candidate visiting order for canopy clustering: identity without a seed,
/// otherwise a seeded shuffle.
std::vector<std::size_t> canopy_order(std::size_t n, std::optional<std::uint64_t> seed);

/// Canopy clustering over n items under an arbitrary distance. Walks `order`;
/// the first item still in the candidate pool becomes a center, its members
/// are all items within `loose` (consumed or not), and every item within
/// `tight` leaves the candidate pool.
template <typename DistanceFn>
std::vector<Canopy> canopy_cluster(std::size_t n, DistanceFn&& distance, double tight,
                                   double loose, std::span<const std::size_t> order) {
  if (!(tight > 0.0) || tight > loose) throw Error("canopy thresholds need 0 < tight <= loose");
  if (order.size() != n) throw Error("canopy order must cover every item");
  std::vector<bool> in_pool(n, true);
  std::vector<Canopy> canopies;
  for (std::size_t center : order) {
    if (!in_pool[center]) continue;
    Canopy canopy{center, {}};
    for (std::size_t j = 0; j < n; ++j) {
      const double d = j == center ? 0.0 : distance(center, j);
      if (d <= loose) canopy.members.push_back(j);
      if (d <= tight) in_pool[j] = false;
    }
    in_pool[center] = false;
    canopies.push_back(std::move(canopy));
  }
  return canopies;
}

template <typename Scalar>
std::vector<Canopy> canopy_cluster(const FlatIndex<Scalar>& index, double tight, double loose,
                                   std::optional<std::uint64_t> order_seed) {
  const auto vecs = index.vectors();
  const auto order = canopy_order(index.size(), order_seed);
  const int dim = index.dim();
  return canopy_cluster(
      index.size(),
      [&](std::size_t a, std::size_t b) {
        return std::min(2.0, detail::half_sq_distance(vecs.col(a).data(), vecs.col(b).data(), dim));
      },
      tight, loose, order);
}

}  // namespace trendscope
