#pragma once
// Small configurations that keep pipeline tests fast.

#include "recip/datagen/scene.hpp"
#include "recip/model/network.hpp"

namespace recip::testing {

inline ModelConfig tiny_model() {
  ModelConfig mc;
  mc.repr_dim = 8;
  mc.stem_channels = 8;
  mc.backbone_channels = 8;
  mc.pixel_hidden = 16;
  mc.head_hidden = 8;
  mc.anchors.scales = {16.0, 24.0};
  return mc;
}

inline SceneConfig tiny_scene() {
  SceneConfig sc;
  sc.image_size = 64;
  sc.min_instances = 1;
  sc.max_instances = 3;
  sc.min_size_fraction = 0.2;
  sc.max_size_fraction = 0.5;
  return sc;
}

}  // namespace recip::testing
