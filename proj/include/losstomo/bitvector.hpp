#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

namespace losstomo {

// Fixed-size bit vector with the word layout exposed so reductions
// (union counts, windowed popcounts) can run a word at a time.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::int64_t n) : size_(n), words_((n + 63) / 64, 0) {}

  std::int64_t size() const { return size_; }

  bool get(std::int64_t i) const {
    return (words_[static_cast<std::size_t>(i >> 6)] >> (i & 63)) & 1u;
  }
  void set(std::int64_t i) {
    words_[static_cast<std::size_t>(i >> 6)] |= std::uint64_t{1} << (i & 63);
  }

  void or_with(const BitVector& o) {
    for (std::size_t w = 0; w < words_.size(); ++w) words_[w] |= o.words_[w];
  }

  std::int64_t count() const { return count_range(0, size_); }

  // popcount over probe indices [begin, end)
  std::int64_t count_range(std::int64_t begin, std::int64_t end) const {
    std::int64_t total = 0;
    for (std::int64_t i = begin; i < end;) {
      std::int64_t w = i >> 6;
      std::uint64_t word = words_[static_cast<std::size_t>(w)];
      std::int64_t lo = i & 63;
      std::int64_t hi = std::min<std::int64_t>(64, end - (w << 6));
      std::uint64_t mask = ~std::uint64_t{0};
      mask <<= lo;
      if (hi < 64) mask &= (std::uint64_t{1} << hi) - 1;
      total += std::popcount(word & mask);
      i = (w << 6) + hi;
    }
    return total;
  }

  // popcount of the bitwise AND of several vectors over [begin, end)
  static std::int64_t and_count(std::span<const BitVector* const> vs,
                                std::int64_t begin, std::int64_t end) {
    if (vs.empty()) return 0;
    std::int64_t total = 0;
    for (std::int64_t i = begin; i < end;) {
      std::int64_t w = i >> 6;
      std::uint64_t word = ~std::uint64_t{0};
      for (const BitVector* v : vs) word &= v->words_[static_cast<std::size_t>(w)];
      std::int64_t lo = i & 63;
      std::int64_t hi = std::min<std::int64_t>(64, end - (w << 6));
      std::uint64_t mask = ~std::uint64_t{0};
      mask <<= lo;
      if (hi < 64) mask &= (std::uint64_t{1} << hi) - 1;
      total += std::popcount(word & mask);
      i = (w << 6) + hi;
    }
    return total;
  }

  std::vector<std::uint64_t>& words() { return words_; }
  const std::vector<std::uint64_t>& words() const { return words_; }

  bool operator==(const BitVector&) const = default;

 private:
  std::int64_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

}  // namespace losstomo
