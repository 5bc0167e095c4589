#pragma once

#include "vxr/tensor.hpp"

namespace vxr {

struct SobelKernels {
    Tensor kx;  // [[-1,0,1],[-2,0,2],[-1,0,1]]
    Tensor ky;  // kx transposed

    SobelKernels();
};

struct SoftClipConfig {
    double temperature = 0.07;
};

// Mean squared element difference over the whole batch. Batches may be any
// shape; leading dim is the batch axis where one exists.
double mse_loss(const Tensor& pred, const Tensor& target);
// d(mse)/d(pred), same shape as pred.
Tensor mse_loss_grad(const Tensor& pred, const Tensor& target);

// Mean over batch of the squared L2 distance between Sobel gradient
// magnitude maps. pred/target: [N,C,H,W] (or [C,H,W] for a single sample).
double sobel_loss(const Tensor& pred, const Tensor& target);
Tensor sobel_loss_grad(const Tensor& pred, const Tensor& target);

// mse + sobel, unit weights.
double structural_loss(const Tensor& pred, const Tensor& target);
Tensor structural_loss_grad(const Tensor& pred, const Tensor& target);

// Soft-label contrastive loss over row-normalized batches p, t: [N,D]:
//   -sum_i sum_j softmax_j(t_i.t_j / tau) * log softmax_j(p_i.t_j / tau)
double softclip_loss(const Tensor& p, const Tensor& t, const SoftClipConfig& cfg);
// d(softclip)/dp, same shape as p.
Tensor softclip_loss_grad(const Tensor& p, const Tensor& t, const SoftClipConfig& cfg);

struct SemanticLossValues {
    double img = 0.0;
    double cap = 0.0;
};

// L_img = softclip(pred_img, target_img) + mse(pred_img, target_img);
// L_cap analogously. All four tensors are [N,D] row-normalized batches.
SemanticLossValues semantic_losses(const Tensor& pred_img, const Tensor& pred_cap,
                                   const Tensor& target_img, const Tensor& target_cap,
                                   const SoftClipConfig& cfg);

// Gradients of (L_img + L_cap) w.r.t. the two predicted batches.
Tensor semantic_loss_grad_img(const Tensor& pred_img, const Tensor& target_img, const SoftClipConfig& cfg);
Tensor semantic_loss_grad_cap(const Tensor& pred_cap, const Tensor& target_cap, const SoftClipConfig& cfg);

// Sobel gradient-magnitude map S(z) = sqrt(gx^2 + gy^2 + eps), z: [C,H,W].
Tensor sobel_magnitude(const Tensor& z, const SobelKernels& k);

}  // namespace vxr
