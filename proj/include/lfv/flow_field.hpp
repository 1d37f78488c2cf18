#pragma once

#include "lfv/camera.hpp"
#include "lfv/image.hpp"

namespace lfv {

// Dense per-view displacement field between two frames.
struct FlowField {
  Grid<float> u;
  Grid<float> v;
  Mask valid;
  Mask occluded;
  Grid<float> energy;
  // Integer argmin chosen by the discrete search at the finest level, before
  // sub-pixel refinement.
  Grid<int> step_x;
  Grid<int> step_y;
  // |m_fwd(p) + m_bwd(p + m_fwd(p))| once the backward field is known.
  Grid<float> round_trip;
  int view = 0;
  int from_frame = 0;
  int to_frame = 1;

  FlowField() = default;
  FlowField(int width, int height)
      : u(width, height, 0.0f), v(width, height, 0.0f), valid(width, height, 0),
        occluded(width, height, 0), energy(width, height, 0.0f), step_x(width, height, 0),
        step_y(width, height, 0), round_trip(width, height, 0.0f) {}

  int width() const noexcept { return u.width(); }
  int height() const noexcept { return u.height(); }
  Vec2 at(int x, int y) const { return {u(x, y), v(x, y)}; }
  // Usable for propagation: valid and not occluded.
  bool usable(int x, int y) const { return valid(x, y) && !occluded(x, y); }
};

}  // namespace lfv
