#pragma once

// Internal per-layer forward/backward kernels. All backward functions
// accumulate (+=) into gx so fan-out in the graph sums naturally; parameter
// gradients are written into freshly zeroed tensors by the caller.

#include "deepcorrect/layers.hpp"
#include "deepcorrect/tensor.hpp"

namespace deepcorrect::math {

// Generalized conv geometry; public Conv2DSpec maps onto this with symmetric
// stride/padding, separable banks with per-axis values.
struct ConvDims {
  int in_ch = 0, out_ch = 0;
  int k_h = 1, k_w = 1;
  int s_h = 1, s_w = 1;
  int p_h = 0, p_w = 0;
  int groups = 1;
};

template <typename T>
void conv_forward(const TensorT<T>& x, const ConvDims& d, const TensorT<T>& W, const TensorT<T>& b, TensorT<T>& y);

template <typename T>
void conv_backward(const TensorT<T>& x, const ConvDims& d, const TensorT<T>& W, const TensorT<T>& gy, TensorT<T>* gx,
                   TensorT<T>* gW, TensorT<T>* gb);

template <typename T>
ConvDims dims_of(const Conv2DSpec& s);
ConvDims vertical_bank_dims(const SeparableConv2DSpec& s);
ConvDims horizontal_bank_dims(const SeparableConv2DSpec& s);

template <typename T>
void relu_forward(const TensorT<T>& x, TensorT<T>& y);
template <typename T>
void relu_backward(const TensorT<T>& x, const TensorT<T>& gy, TensorT<T>& gx);

template <typename T>
void maxpool_forward(const TensorT<T>& x, const MaxPoolSpec& s, TensorT<T>& y);
template <typename T>
void maxpool_backward(const TensorT<T>& x, const MaxPoolSpec& s, const TensorT<T>& gy, TensorT<T>& gx);

template <typename T>
void batchnorm_forward(const TensorT<T>& x, const BatchNormSpec& s, const TensorT<T>& gamma, const TensorT<T>& beta,
                       TensorT<T>& running_mean, TensorT<T>& running_var, bool use_batch_stats, bool update_running,
                       TensorT<T>& y);
template <typename T>
void batchnorm_backward(const TensorT<T>& x, const BatchNormSpec& s, const TensorT<T>& gamma,
                        const TensorT<T>& running_mean, const TensorT<T>& running_var, bool used_batch_stats,
                        const TensorT<T>& gy, TensorT<T>* gx, TensorT<T>* ggamma, TensorT<T>* gbeta);

template <typename T>
void dense_forward(const TensorT<T>& x, const DenseSpec& s, const TensorT<T>& W, const TensorT<T>& b, TensorT<T>& y);
template <typename T>
void dense_backward(const TensorT<T>& x, const DenseSpec& s, const TensorT<T>& W, const TensorT<T>& gy, TensorT<T>* gx,
                    TensorT<T>* gW, TensorT<T>* gb);

template <typename T>
void add_forward(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& y);

template <typename T>
void global_avg_pool_forward(const TensorT<T>& x, TensorT<T>& y);
template <typename T>
void global_avg_pool_backward(const TensorT<T>& x, const TensorT<T>& gy, TensorT<T>& gx);

// probs and (optionally) the mean cross-entropy loss from logits.
template <typename T>
void softmax_forward(const TensorT<T>& logits, const std::vector<int>* labels, TensorT<T>& probs, double* loss);
// seed gradient w.r.t. logits: (probs - onehot)/B, accumulated into glogits.
template <typename T>
void softmax_backward(const TensorT<T>& probs, const std::vector<int>& labels, TensorT<T>& glogits);

template <typename T>
void channel_select_forward(const TensorT<T>& x, const ChannelSelectSpec& s, TensorT<T>& y);
template <typename T>
void channel_select_backward(const ChannelSelectSpec& s, const TensorT<T>& gy, TensorT<T>& gx);

template <typename T>
void channel_merge_forward(const TensorT<T>& narrow, const TensorT<T>& base, const ChannelMergeSpec& s, TensorT<T>& y);
template <typename T>
void channel_merge_backward(const ChannelMergeSpec& s, const TensorT<T>& gy, TensorT<T>* gnarrow, TensorT<T>* gbase);

template <typename T>
void downsample_pad_forward(const TensorT<T>& x, const DownsamplePadSpec& s, TensorT<T>& y);
template <typename T>
void downsample_pad_backward(const TensorT<T>& x, const DownsamplePadSpec& s, const TensorT<T>& gy, TensorT<T>& gx);

}  // namespace deepcorrect::math
