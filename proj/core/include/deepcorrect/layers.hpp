#pragma once

#include <string>
#include <variant>
#include <vector>

namespace deepcorrect {

// Cross-correlation convolution (no kernel flip). Weight tensor layout is
// (out_channels, in_channels/groups, k_h, k_w); bias is (out_channels).
struct Conv2DSpec {
  int k_h = 3, k_w = 3;
  int in_ch = 0, out_ch = 0;
  int stride = 1;
  int pad = 0;
  bool bias = true;
  int groups = 1;
};

// Vertical bank (rank, in_ch, k, 1) applied with stride (s,1) and padding
// (p,0), then horizontal bank (out_ch, rank, 1, k) with stride (1,s) and
// padding (0,p). Bias lives on the horizontal bank.
struct SeparableConv2DSpec {
  int k = 3;
  int in_ch = 0, out_ch = 0;
  int rank = 1;
  int stride = 1;
  int pad = 0;
  bool bias = true;
};

struct ReluSpec {};

struct MaxPoolSpec {
  int k = 2;
  int stride = 2;
  int pad = 0;
};

struct BatchNormSpec {
  int channels = 0;
  double eps = 1e-5;
  double momentum = 0.1;
};

struct DenseSpec {
  int in = 0, out = 0;
};

// out = input + activations[source]. Merges residual branches.
struct AddSpec {
  int source = -1;
};

struct GlobalAvgPoolSpec {};

struct SoftmaxXentSpec {
  int classes = 0;
};

// Gathers the listed channels out of the input, in the listed order.
struct ChannelSelectSpec {
  std::vector<int> channels;
};

// Takes activations[base] and overwrites the listed channels with the
// (narrow) primary input; all other channels of base pass through untouched.
struct ChannelMergeSpec {
  int base = -1;
  std::vector<int> channels;
};

// Identity shortcut for strided residual blocks: spatially subsample by
// stride and zero-pad new channels up to out_ch.
struct DownsamplePadSpec {
  int stride = 2;
  int out_ch = 0;
};

using LayerKind = std::variant<Conv2DSpec, SeparableConv2DSpec, ReluSpec, MaxPoolSpec, BatchNormSpec,
                               DenseSpec, AddSpec, GlobalAvgPoolSpec, SoftmaxXentSpec, ChannelSelectSpec,
                               ChannelMergeSpec, DownsamplePadSpec>;

const char* kind_name(const LayerKind& k);

inline int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace deepcorrect
