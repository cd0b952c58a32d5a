#include "mcbatch/sampling.hpp"

#include <cmath>

namespace mcbatch {

bool HyperRect::valid() const {
  if (low.size() != high.size() || low.empty()) return false;
  for (std::size_t i = 0; i < low.size(); ++i) {
    if (!(low[i] < high[i])) return false;
    if (!std::isfinite(low[i]) || !std::isfinite(high[i])) return false;
  }
  return true;
}

double HyperRect::volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < low.size(); ++i) v *= high[i] - low[i];
  return v;
}

HyperRect HyperRect::unit(std::size_t d) {
  HyperRect r;
  r.low.assign(d, 0.0);
  r.high.assign(d, 1.0);
  return r;
}

HyperRect HyperRect::box(std::vector<double> lo, std::vector<double> hi) {
  HyperRect r;
  r.low = std::move(lo);
  r.high = std::move(hi);
  if (!r.valid()) throw InvalidDomain("invalid hyperrectangle bounds");
  return r;
}

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline void philox_block(std::uint32_t k0, std::uint32_t k1, std::uint32_t c0,
                         std::uint32_t c1, std::uint32_t c2, std::uint32_t c3,
                         std::uint32_t out[4]) {
  for (int round = 0; round < 10; ++round) {
    std::uint64_t p0 = std::uint64_t(kPhiloxM0) * c0;
    std::uint64_t p1 = std::uint64_t(kPhiloxM1) * c2;
    std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
    std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
    c0 = hi1 ^ c1 ^ k0;
    c1 = lo1;
    c2 = hi0 ^ c3 ^ k1;
    c3 = lo0;
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  out[0] = c0;
  out[1] = c1;
  out[2] = c2;
  out[3] = c3;
}

inline double to_unit_double(std::uint32_t hi, std::uint32_t lo) {
  std::uint64_t u = (std::uint64_t(hi) << 32) | lo;
  return double(u >> 11) * 0x1.0p-53;
}

}  // namespace

UniformStream::UniformStream(const StreamKey& key) {
  if (key.chunk_index > 0xFFFFFFFFull)
    throw std::out_of_range("chunk_index exceeds 32 bits");
  // seed and integrand select the cipher key; trial and chunk occupy
  // dedicated counter words, so those streams are disjoint by construction.
  std::uint64_t h = splitmix64(key.global_seed);
  h = splitmix64(h ^ (0x9E3779B97F4A7C15ull * (std::uint64_t(key.integrand_index) + 1)));
  key0_ = std::uint32_t(h);
  key1_ = std::uint32_t(h >> 32);
  ctr2_ = std::uint32_t(key.chunk_index);
  ctr3_ = key.trial_index;
}

void UniformStream::refill() {
  std::uint32_t out[4];
  philox_block(key0_, key1_, std::uint32_t(block_), std::uint32_t(block_ >> 32),
               ctr2_, ctr3_, out);
  ++block_;
  buf_[1] = to_unit_double(out[0], out[1]);
  buf_[0] = to_unit_double(out[2], out[3]);
  avail_ = 2;
}

void sample_uniform(const HyperRect& rect, const StreamKey& key,
                    std::size_t count, std::vector<double>& out) {
  if (!rect.valid()) throw InvalidDomain("invalid hyperrectangle");
  const std::size_t d = rect.dim();
  out.resize(count * d);
  UniformStream stream(key);
  std::size_t w = 0;
  for (std::size_t p = 0; p < count; ++p)
    for (std::size_t j = 0; j < d; ++j)
      out[w++] = rect.low[j] + (rect.high[j] - rect.low[j]) * stream.next();
}

std::vector<double> sample_uniform(const HyperRect& rect, const StreamKey& key,
                                   std::size_t count) {
  std::vector<double> out;
  sample_uniform(rect, key, count, out);
  return out;
}

}  // namespace mcbatch
