#pragma once

#include <sstream>

#include "ipc/tensor.hpp"

namespace ipc {

// Transform sizes for the codec: 3 strided conv stages in the main pair
// (factor 8) and 2 in the hyper pair (factor 4 more).
struct ArchDescriptor {
  int hidden = 64;          // F
  int latent_channels = 32;  // C_y
  int hyper_channels = 16;   // C_z
  int kernel = 5;
  double sigma_min = 0.11;

  std::string canonical() const {
    std::ostringstream os;
    os << "ipc-v1;hidden=" << hidden << ";cy=" << latent_channels << ";cz=" << hyper_channels
       << ";k=" << kernel << ";sigma_min=" << sigma_min;
    return os.str();
  }
  uint64_t hash() const {
    auto s = canonical();
    return fnv1a64(s.data(), s.size());
  }
  bool operator==(const ArchDescriptor&) const = default;

  static ArchDescriptor parse(const std::string& s) {
    ArchDescriptor a;
    std::istringstream is(s);
    std::string tok;
    if (!std::getline(is, tok, ';') || tok != "ipc-v1")
      throw std::runtime_error("arch: unrecognized descriptor '" + s + "'");
    while (std::getline(is, tok, ';')) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw std::runtime_error("arch: bad field '" + tok + "'");
      std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
      if (k == "hidden")
        a.hidden = std::stoi(v);
      else if (k == "cy")
        a.latent_channels = std::stoi(v);
      else if (k == "cz")
        a.hyper_channels = std::stoi(v);
      else if (k == "k")
        a.kernel = std::stoi(v);
      else if (k == "sigma_min")
        a.sigma_min = std::stod(v);
      else
        throw std::runtime_error("arch: unknown field '" + k + "'");
    }
    return a;
  }
};

}  // namespace ipc
