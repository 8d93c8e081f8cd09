#pragma once

// Measurement of generated images: ink components and region occupancy.

#include <array>
#include <cstdint>
#include <vector>

#include "glab/error.hpp"
#include "glab/image.hpp"

namespace glab {

inline constexpr double kDefaultInkThreshold = 0.5;
inline constexpr int kDefaultMinArea = 3;

struct Component {
  int label = 0;
  int pixel_count = 0;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

/// Labels are contiguous from 1 over the kept components; 0 is background or
/// a component dropped for being smaller than min_area.
struct ComponentLabeling {
  int width = 0;
  int height = 0;
  std::vector<int> labels;
  std::vector<Component> components;

  int at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

inline bool is_ink(double value, double threshold) { return value < threshold; }

/// 4-connected labeling of ink pixels (value < threshold) by breadth-first
/// flood fill in raster order, dropping components below min_area.
inline ComponentLabeling label_components(const ImageGrid& image, double threshold, int min_area) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw_invalid("ink threshold must lie in (0, 1)");
  const int w = image.width;
  const int h = image.height;
  ComponentLabeling out{w, h, std::vector<int>(image.size(), 0), {}};
  std::vector<int> provisional(image.size(), 0);
  std::vector<int> queue;
  queue.reserve(image.size());
  int next = 0;
  constexpr std::array<std::array<int, 2>, 4> kSteps{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t seed = static_cast<std::size_t>(y) * w + x;
      if (provisional[seed] != 0 || !is_ink(image.values[seed], threshold)) continue;
      ++next;
      Component comp{0, 0, x, y, x, y};
      queue.clear();
      queue.push_back(static_cast<int>(seed));
      provisional[seed] = next;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const int idx = queue[head];
        const int px = idx % w;
        const int py = idx / w;
        ++comp.pixel_count;
        comp.min_x = std::min(comp.min_x, px);
        comp.max_x = std::max(comp.max_x, px);
        comp.min_y = std::min(comp.min_y, py);
        comp.max_y = std::max(comp.max_y, py);
        for (const auto& [dx, dy] : kSteps) {
          const int nx = px + dx;
          const int ny = py + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
          if (provisional[n] == 0 && is_ink(image.values[n], threshold)) {
            provisional[n] = next;
            queue.push_back(static_cast<int>(n));
          }
        }
      }
      if (comp.pixel_count >= min_area) {
        comp.label = static_cast<int>(out.components.size()) + 1;
        for (int idx : queue) out.labels[static_cast<std::size_t>(idx)] = comp.label;
        out.components.push_back(comp);
      }
    }
  }
  return out;
}

struct CircleCount {
  int count = 0;
  ComponentLabeling labeling;
};

/// Number of ink components with at least min_area pixels. Touching circles
/// merge into one component and count once.
inline CircleCount count_circles(const ImageGrid& image, double threshold = kDefaultInkThreshold,
                                 int min_area = kDefaultMinArea) {
  ComponentLabeling labeling = label_components(image, threshold, min_area);
  const int count = static_cast<int>(labeling.components.size());
  return CircleCount{count, std::move(labeling)};
}

/// True iff the region holds at least min_area ink pixels.
inline bool region_occupied(const ImageGrid& image, const Mask& region, double threshold = kDefaultInkThreshold,
                            int min_area = kDefaultMinArea) {
  if (region.width != image.width || region.height != image.height) {
    throw_invalid("region and image dimensions differ");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw_invalid("ink threshold must lie in (0, 1)");
  int ink = 0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (region[i] && is_ink(image.values[i], threshold)) ++ink;
  }
  return ink >= min_area;
}

/// Debug rendering of a labeling: background white, labels spread over gray levels.
inline ImageGrid labeling_image(const ComponentLabeling& labeling) {
  ImageGrid img(labeling.width, labeling.height, 1.0);
  const auto n = static_cast<double>(labeling.components.size());
  for (std::size_t i = 0; i < labeling.labels.size(); ++i) {
    const int l = labeling.labels[i];
    if (l > 0) img.values[i] = 0.8 * (l - 1) / std::max(1.0, n);
  }
  return img;
}

}  // namespace glab
