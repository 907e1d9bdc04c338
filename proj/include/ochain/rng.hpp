#ifndef OCHAIN_RNG_HPP
#define OCHAIN_RNG_HPP

#include <cstddef>
#include <cstdint>
#include <random>

namespace ochain {

using Rng = std::mt19937_64;

// Stream for one replica: seed_seq over (seed, replica, purpose). Adding replicas
// never changes the streams of existing ones.
inline Rng replica_rng(std::uint64_t seed, std::uint64_t replica, std::uint32_t purpose = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replica), static_cast<std::uint32_t>(replica >> 32),
                    purpose};
  return Rng(seq);
}

// Standard normals drawn in call order. The (step, bond) arguments are part of the
// noise-source interface; sources that need to couple two runs can key on them.
class NormalStream {
 public:
  explicit NormalStream(Rng& rng) : rng_(rng) {}
  double operator()(std::uint64_t /*step*/, std::size_t /*bond*/) { return dist_(rng_); }
  double operator()() { return dist_(rng_); }

 private:
  Rng& rng_;
  std::normal_distribution<double> dist_;
};

}  // namespace ochain

#endif
