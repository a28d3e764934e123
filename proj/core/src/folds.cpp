#include <algorithm>

#include "hdk/dataio.hpp"
#include "hdk/error.hpp"
#include "hdk/rng.hpp"

namespace hdk::io {

std::vector<std::vector<std::string>> FoldAssignment::folds() const {
  std::vector<std::vector<std::string>> out(k);
  for (const auto& [id, f] : fold_of) out.at(f).push_back(id);  // map order is sorted
  return out;
}

std::vector<int> FoldAssignment::sizes() const {
  std::vector<int> out(k, 0);
  for (const auto& [id, f] : fold_of) ++out.at(f);
  return out;
}

FoldAssignment split_folds(const std::vector<std::string>& ids, int k, std::uint64_t seed) {
  require(k >= 2, "split_folds: k must be >= 2, got " + std::to_string(k));
  require(static_cast<std::size_t>(k) <= ids.size(),
          "split_folds: k = " + std::to_string(k) + " exceeds the " +
              std::to_string(ids.size()) + " ids");
  std::vector<std::string> order = ids;
  {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    if (auto it = std::adjacent_find(sorted.begin(), sorted.end()); it != sorted.end()) {
      fail(ErrorKind::kInvalidArgument, "split_folds: duplicate id '" + *it + "'");
    }
  }
  Rng rng(seed);
  for (std::size_t i = order.size() - 1; i >= 1; --i) {
    std::swap(order[i], order[rng.below(i + 1)]);
  }
  FoldAssignment out;
  out.k = k;
  out.seed = seed;
  for (std::size_t p = 0; p < order.size(); ++p) {
    out.fold_of[order[p]] = static_cast<int>(p % k);
  }
  return out;
}

nlohmann::json to_json(const FoldAssignment& f) {
  nlohmann::json assignments = nlohmann::json::object();
  for (const auto& [id, fold] : f.fold_of) assignments[id] = fold;
  return {{"seed", f.seed}, {"k", f.k}, {"assignments", assignments}};
}

FoldAssignment folds_from_json(const nlohmann::json& j) {
  FoldAssignment f;
  try {
    f.seed = j.at("seed").get<std::uint64_t>();
    f.k = j.at("k").get<int>();
    for (const auto& [id, fold] : j.at("assignments").items()) {
      const int v = fold.get<int>();
      require(v >= 0 && v < f.k, "folds: id '" + id + "' has fold " + std::to_string(v) +
                                     " outside 0.." + std::to_string(f.k - 1));
      f.fold_of[id] = v;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("folds: ") + e.what());
  }
  return f;
}

}  // namespace hdk::io
