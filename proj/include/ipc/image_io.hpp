#pragma once

#include "ipc/tensor.hpp"

namespace ipc {

// 8-bit binary pixmap (P6) <-> [3,H,W] float tensor with values k/255.
Tensor<float> load_ppm(const std::string& path);
void save_ppm(const std::string& path, const Tensor<float>& img);

std::vector<uint8_t> encode_ppm(const Tensor<float>& img);
Tensor<float> decode_ppm(const std::vector<uint8_t>& bytes);

// Edge-replication padding of [3,H,W] (or [N,C,H,W]) up to multiples of m on
// the bottom/right; crop_to undoes it.
Tensor<float> pad_to_multiple(const Tensor<float>& img, int m);
Tensor<float> crop_to(const Tensor<float>& img, int h, int w);

}  // namespace ipc
