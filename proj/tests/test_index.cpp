#include <random>

#include "support.hpp"
#include "trendscope/index.hpp"

using namespace trendscope;

namespace {

Eigen::Vector2d unit2(double angle_deg) {
  const double a = angle_deg * std::numbers::pi / 180.0;
  return {std::cos(a), std::sin(a)};
}

}  // namespace

TEST_CASE("cosine distance on unit vectors") {
  const Eigen::Vector2d x(1, 0), y(0, 1), d(std::sqrt(2.0) / 2, std::sqrt(2.0) / 2);
  CHECK(cosine_distance(x, x) == 0.0);
  CHECK(cosine_distance(x, y) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_distance(x, d) == doctest::Approx(1.0 - std::sqrt(2.0) / 2).epsilon(1e-12));
  CHECK(cosine_distance(x, d) == doctest::Approx(0.29289).epsilon(1e-5));
  CHECK(cosine_distance(x, Eigen::Vector2d(-1, 0)) == 2.0);
  CHECK_THROWS_AS(cosine_distance(Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(3)), Error);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int i = 0; i < 500; ++i) {
    Eigen::VectorXd a(16), b(16);
    for (int j = 0; j < 16; ++j) a[j] = g(rng), b[j] = g(rng);
    a.normalize();
    b.normalize();
    const double dab = cosine_distance(a, b);
    CHECK(dab == cosine_distance(b, a));
    CHECK(dab >= 0.0);
    CHECK(dab <= 2.0);
    CHECK(dab == doctest::Approx(1.0 - a.dot(b)).epsilon(1e-12));
  }
}

TEST_CASE("general cosine distance treats zero vectors explicitly") {
  CHECK(general_cosine_distance(Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()) == 0.0);
  CHECK(general_cosine_distance(Eigen::Vector3d::Zero(), Eigen::Vector3d(1, 2, 3)) == 1.0);
  CHECK(general_cosine_distance(Eigen::Vector3d(2, 0, 0), Eigen::Vector3d(5, 0, 0)) == doctest::Approx(0.0));
}

TEST_CASE("knn on a hand-built 2-D index") {
  FlatIndex<double> index(2);
  index.add("a", unit2(0));
  index.add("b", unit2(90));
  index.add("c", unit2(45));
  index.add("d", unit2(180));
  index.add("e", unit2(-30));
  index.seal();
  const auto nn = index.knn(unit2(20), 2);
  REQUIRE(nn.size() == 2);
  CHECK(nn[0].item_id == "a");
  CHECK(nn[1].item_id == "c");
  CHECK(nn[0].distance == doctest::Approx(1.0 - std::cos(20 * std::numbers::pi / 180)).epsilon(1e-9));
  CHECK(nn[1].distance == doctest::Approx(1.0 - std::cos(25 * std::numbers::pi / 180)).epsilon(1e-9));

  const auto all = index.knn(unit2(20), 99);
  std::vector<std::string> order;
  for (const auto& n : all) order.push_back(n.item_id);
  CHECK(order == std::vector<std::string>{"a", "c", "e", "b", "d"});
}

TEST_CASE("knn breaks distance ties by id") {
  FlatIndex<double> index(2);
  index.add("y", unit2(10));
  index.add("x", unit2(-10));
  index.seal();
  const auto nn = index.knn(Eigen::Vector2d(1, 0), 2);
  REQUIRE(nn[0].distance == nn[1].distance);
  CHECK(nn[0].item_id == "x");
}

TEST_CASE("knn edge cases") {
  FlatIndex<float> empty(3);
  empty.seal();
  CHECK(empty.knn(Eigen::Vector3f(1, 0, 0), 3).empty());
  FlatIndex<float> idx(2);
  CHECK_THROWS_AS(idx.add("bad", Eigen::Vector2f(1, 1)), Error);
  idx.add("x", Eigen::Vector2f(1, 0));
  CHECK_THROWS_AS(idx.add("x", Eigen::Vector2f(0, 1)), Error);
  CHECK_THROWS_AS(idx.knn(Eigen::Vector2f(1, 0), 1), Error);  // not sealed
  idx.seal();
  CHECK_THROWS_AS(idx.add("y", Eigen::Vector2f(0, 1)), Error);
  CHECK_THROWS_AS(idx.knn(Eigen::Vector2f(1, 0), 0), Error);
}

TEST_CASE("knn matches a brute-force scan") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = std::uniform_int_distribution<int>(1, 16)(rng);
    const int n = std::uniform_int_distribution<int>(1, 120)(rng);
    const int levels = 3;  // coarse coordinates force exact ties
    std::vector<std::string> ids;
    EmbeddingMatrix<float> m(dim, n);
    for (int i = 0; i < n; ++i) {
      EmbeddingVector<float> v(dim);
      do {
        for (int j = 0; j < dim; ++j) v[j] = float(std::uniform_int_distribution<int>(-levels, levels)(rng));
      } while (v.norm() == 0.0f);
      m.col(i) = normalized_embedding(v);
      ids.push_back("item" + std::to_string((i * 37) % 1000));
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (static_cast<int>(ids.size()) != n) continue;
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto index = FlatIndex<float>::from_matrix(ids, m);
    const EmbeddingVector<float> q = m.col(std::uniform_int_distribution<int>(0, n - 1)(rng));
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n + 3)(rng);

    std::vector<std::pair<double, std::string>> brute;
    for (int i = 0; i < n; ++i) {
      double acc = 0;
      for (int j = 0; j < dim; ++j) acc += std::pow(double(m(j, i)) - double(q[j]), 2);
      brute.emplace_back(std::min(2.0, 0.5 * acc), ids[i]);
    }
    std::sort(brute.begin(), brute.end());
    const auto got = index.knn(q, k);
    REQUIRE(got.size() == std::min<std::size_t>(k, n));
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].item_id == brute[i].second);
      CHECK(got[i].distance == brute[i].first);
    }
  }
}

TEST_CASE("vector files round trip through a read-only mapping") {
  const auto dir = testing::scratch_dir("vectors");
  FlatIndex<float> idx;
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g;
  for (int i = 0; i < 40; ++i) {
    EmbeddingVector<float> v(8);
    for (int j = 0; j < 8; ++j) v[j] = g(rng);
    idx.add("id" + std::to_string(i), normalized_embedding(v));
  }
  idx.seal();
  idx.save(dir / "v.bin", dir / "v.ids");
  const auto opened = FlatIndex<float>::open(dir / "v.bin", dir / "v.ids");
  CHECK(opened.ids() == idx.ids());
  CHECK((opened.vectors().array() == idx.vectors().array()).all());
  const EmbeddingVector<float> q = idx.vectors().col(7);
  const auto a = idx.knn(q, 5), b = opened.knn(q, 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(a[i].item_id == b[i].item_id);

  const auto as_double = FlatIndex<double>::open(dir / "v.bin", dir / "v.ids");
  CHECK(as_double.size() == 40);

  write_file_atomic(dir / "short.ids", "id0\n");
  CHECK_THROWS_AS(FlatIndex<float>::open(dir / "v.bin", dir / "short.ids"), Error);
  write_file_atomic(dir / "junk.bin", "nope");
  CHECK_THROWS_AS(FlatIndex<float>::open(dir / "junk.bin", dir / "v.ids"), Error);
}

TEST_CASE("canopy worked example on scalars") {
  const std::vector<double> x{0.0, 0.05, 0.5, 0.55, 2.0};
  const auto order = canopy_order(x.size(), std::nullopt);
  const auto canopies = canopy_cluster(
      x.size(), [&](std::size_t a, std::size_t b) { return std::abs(x[a] - x[b]); }, 0.15, 0.2, order);
  REQUIRE(canopies.size() == 3);
  CHECK(canopies[0].center == 0);
  CHECK(canopies[0].members == std::vector<std::size_t>{0, 1});
  CHECK(canopies[1].center == 2);
  CHECK(canopies[1].members == std::vector<std::size_t>{2, 3});
  CHECK(canopies[2].center == 4);
  CHECK(canopies[2].members == std::vector<std::size_t>{4});
}

TEST_CASE("canopy degenerate inputs") {
  auto run = [](const std::vector<double>& x) {
    return canopy_cluster(
        x.size(), [&](std::size_t a, std::size_t b) { return std::abs(x[a] - x[b]); }, 0.15, 0.2,
        canopy_order(x.size(), std::nullopt));
  };
  const auto same = run({1, 1, 1, 1});
  REQUIRE(same.size() == 1);
  CHECK(same[0].members.size() == 4);
  const auto apart = run({0, 1, 2, 3});
  CHECK(apart.size() == 4);
  for (const auto& c : apart) CHECK(c.members.size() == 1);
  CHECK_THROWS_AS(canopy_cluster(
                      2, [](std::size_t, std::size_t) { return 0.0; }, 0.3, 0.2, canopy_order(2, std::nullopt)),
                  Error);
}

TEST_CASE("canopy centers are separated and every item is covered") {
  std::mt19937_64 rng(8);
  std::normal_distribution<float> g;
  for (int trial = 0; trial < 50; ++trial) {
    FlatIndex<float> idx;
    const int dim = 2 + trial % 5;
    for (int i = 0; i < 60; ++i) {
      EmbeddingVector<float> v(dim);
      for (int j = 0; j < dim; ++j) v[j] = g(rng);
      idx.add(std::to_string(i), normalized_embedding(v));
    }
    idx.seal();
    const auto canopies = canopy_cluster(idx, 0.15, 0.2, std::uint64_t(trial));
    std::vector<bool> covered(idx.size(), false);
    for (std::size_t a = 0; a < canopies.size(); ++a) {
      for (auto m : canopies[a].members) {
        covered[m] = true;
        CHECK(cosine_distance(idx.vector(m), idx.vector(canopies[a].center)) <= 0.2 + 1e-12);
      }
      for (std::size_t b = a + 1; b < canopies.size(); ++b)
        CHECK(cosine_distance(idx.vector(canopies[a].center), idx.vector(canopies[b].center)) > 0.15);
    }
    CHECK(std::all_of(covered.begin(), covered.end(), [](bool c) { return c; }));
  }
}
