#pragma once

#include <string>

#include "oadp/error.hpp"

namespace oadp {

// Axis-aligned rectangle in continuous image (or feature) coordinates,
// half-open: [x1, x2) x [y1, y2). Degenerate boxes are rejected.
class Box {
 public:
  Box(double x1, double y1, double x2, double y2)
      : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
    check(x1 < x2 && y1 < y2, ErrorKind::kDegenerateBox,
          "degenerate box (" + std::to_string(x1) + ", " + std::to_string(y1) +
              ", " + std::to_string(x2) + ", " + std::to_string(y2) + ")");
  }

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1_ + x2_); }
  double center_y() const { return 0.5 * (y1_ + y2_); }

  friend bool operator==(const Box&, const Box&) = default;

 private:
  double x1_, y1_, x2_, y2_;
};

}  // namespace oadp
