#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mcbatch {

// Samples per (key, chunk); chunk_index is the unit of parallel work.
inline constexpr std::size_t kChunkSize = 65536;

// Axis-aligned integration domain, half-open along every axis.
struct HyperRect {
  std::vector<double> low;
  std::vector<double> high;

  std::size_t dim() const { return low.size(); }
  bool valid() const;
  double volume() const;

  static HyperRect unit(std::size_t d);
  static HyperRect box(std::vector<double> lo, std::vector<double> hi);
};

struct InvalidDomain : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Identifies an independent random stream.  Distinct keys yield disjoint
// counter blocks (trial/chunk) or distinct cipher keys (seed/integrand),
// so any worker may generate any chunk without coordination.
struct StreamKey {
  std::uint64_t global_seed = 0;
  std::uint32_t integrand_index = 0;
  std::uint32_t trial_index = 0;
  std::uint64_t chunk_index = 0;

  StreamKey with_chunk(std::uint64_t c) const {
    StreamKey k = *this;
    k.chunk_index = c;
    return k;
  }
};

// Philox4x32-10 counter-based stream of doubles in [0,1).
// Output is a pure function of (key, draw counter).
class UniformStream {
 public:
  explicit UniformStream(const StreamKey& key);

  double next() {
    if (avail_ == 0) refill();
    return buf_[--avail_];
  }

 private:
  void refill();

  std::uint32_t key0_, key1_;
  std::uint32_t ctr2_, ctr3_;
  std::uint64_t block_ = 0;
  std::array<double, 2> buf_{};
  unsigned avail_ = 0;
};

// `count` points, row-major; coordinate j is low[j] + width[j] * u with
// u drawn from the key's unit stream, so affine domain mapping is exact.
void sample_uniform(const HyperRect& rect, const StreamKey& key,
                    std::size_t count, std::vector<double>& out);
std::vector<double> sample_uniform(const HyperRect& rect, const StreamKey& key,
                                   std::size_t count);

}  // namespace mcbatch
