#include <algorithm>
#include <numeric>
#include <random>

#include "distill/data/dataset.hpp"

namespace distill::data {

namespace {

enum : std::uint32_t { kOrderStream = 1, kNegativeStream = 2 };

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t epoch, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), stream};
  return std::mt19937_64(seq);
}

}  // namespace

bool class_sets_differ(const VideoSample& a, const VideoSample& b) { return a.class_set() != b.class_set(); }

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = stream_rng(seed, epoch, kOrderStream);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<BatchPairing> make_batches(const Corpus& corpus, int batch_size, int negatives, std::uint64_t seed,
                                       std::uint64_t epoch) {
  if (negatives < 0) throw ConfigError("negatives per positive must be >= 0");
  if (batch_size < negatives + 1 || batch_size % (negatives + 1) != 0) {
    throw ConfigError("batch size " + std::to_string(batch_size) + " is not a positive multiple of N+1 = " +
                      std::to_string(negatives + 1));
  }
  const std::size_t per_batch = static_cast<std::size_t>(batch_size / (negatives + 1));

  std::vector<std::vector<int>> class_sets;
  class_sets.reserve(corpus.size());
  for (const VideoSample& v : corpus) class_sets.push_back(v.class_set());

  // Candidate negatives per video.
  std::vector<std::vector<std::size_t>> candidates(corpus.size());
  if (negatives > 0) {
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      for (std::size_t j = 0; j < corpus.size(); ++j) {
        if (class_sets[i] != class_sets[j]) candidates[i].push_back(j);
      }
      if (candidates[i].empty()) {
        throw PairingError("no video with a different class set exists for video " + std::to_string(corpus[i].id));
      }
    }
  }

  const std::vector<std::size_t> order = epoch_order(corpus.size(), seed, epoch);
  auto rng = stream_rng(seed, epoch, kNegativeStream);
  std::vector<BatchPairing> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += per_batch) {
    BatchPairing b;
    b.negatives_per_positive = negatives;
    const std::size_t end = std::min(order.size(), begin + per_batch);
    for (std::size_t p = begin; p < end; ++p) {
      const std::size_t i = order[p];
      b.positives.push_back(i);
      for (int n = 0; n < negatives; ++n) {
        const auto& c = candidates[i];
        b.negatives.emplace_back(i, c[static_cast<std::size_t>(rng() % c.size())]);
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace distill::data
