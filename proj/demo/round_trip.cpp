// Forward and inverse two-sided transforms of a synthetic sinusoid image,
// printing the dominant frequency bin and the reconstruction error.

#include <cmath>
#include <cstdio>

#include "spectral/data.hpp"
#include "spectral/layer.hpp"
#include "spectral/transforms.hpp"

int main() {
  using namespace spectral;
  constexpr std::size_t n = 16;
  const Dataset d = make_spectral_dataset(4, 4, n, 0.0, 7);

  const RealMatrix dct = build_dct2(n, n), idct = build_dct3_inverse(n, n);
  const ComplexPair dft = build_dft(n, n), idft = build_idft(n, n);

  for (std::size_t s = 0; s < d.size(); ++s) {
    const auto px = d.pixels(s);
    const RealMatrix x(n, n, std::vector<double>(px.begin(), px.end()));

    const RealMatrix c = dct2d_forward(x, dct, dct);
    const RealMatrix x_dct = matmul_transform_forward(c, idct, idct);

    const ComplexPair f = dft2d_forward_real(x, dft, dft);
    const ComplexPair back = two_sided_complex(idft, f, idft);
    const RealMatrix amp = complex_output(f, ComplexOutput::Amplitude);

    std::size_t bk = 0, bl = 0;
    double err_dct = 0.0, err_dft = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = 0; l < n; ++l) {
        if (amp(k, l) > amp(bk, bl))
          bk = k, bl = l;
        err_dct = std::max(err_dct, std::abs(x_dct(k, l) - x(k, l)));
        err_dft = std::max(err_dft, std::abs(back.re(k, l) - x(k, l)));
      }
    std::printf("class %zu: peak DFT bin (%zu,%zu) |X|=%.1f  max round-trip error dct %.2e dft %.2e\n",
                d.label(s), bk, bl, amp(bk, bl), err_dct, err_dft);
  }
  return 0;
}
