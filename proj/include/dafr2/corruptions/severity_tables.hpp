#pragma once

#include <array>
#include <string_view>

namespace dafr2 {

// Per-severity corruption constants. Bump kSeverityTableVersion whenever a
// value changes so stored datasets and metrics stay attributable.
//
// Noise, blur, weather and contrast rows follow the common-corruptions
// reference ranges; geometric and overlay rows are sized for 16..32 px
// images. Column 0 is the primary intensity parameter; its direction of
// increasing destructiveness is recorded per table.

inline constexpr int kSeverityTableVersion = 1;

enum class Destructive { increasing, decreasing };

struct SeverityTable {
  std::string_view primary;      // meaning of column 0
  std::string_view secondary;    // meaning of column 1 ("" when unused)
  std::string_view tertiary;     // meaning of column 2 ("" when unused)
  Destructive direction;
  std::array<std::array<double, 3>, 5> levels;
};

namespace severity {

inline constexpr SeverityTable gaussian_noise{"sigma", "", "", Destructive::increasing,
                                              {{{0.04}, {0.06}, {0.08}, {0.09}, {0.10}}}};
inline constexpr SeverityTable shot_noise{"photons_per_unit", "", "", Destructive::decreasing,
                                          {{{500}, {250}, {100}, {75}, {50}}}};
inline constexpr SeverityTable impulse_noise{"amount", "", "", Destructive::increasing,
                                             {{{0.01}, {0.02}, {0.03}, {0.05}, {0.07}}}};
inline constexpr SeverityTable speckle_noise{"sigma", "", "", Destructive::increasing,
                                             {{{0.06}, {0.10}, {0.12}, {0.16}, {0.20}}}};
inline constexpr SeverityTable defocus_blur{"radius_px", "", "", Destructive::increasing,
                                            {{{0.75}, {1.0}, {1.25}, {1.5}, {2.0}}}};
inline constexpr SeverityTable glass_blur{"sigma_px", "max_delta_px", "iterations", Destructive::increasing,
                                          {{{0.30, 1, 1}, {0.45, 1, 1}, {0.60, 1, 2}, {0.75, 2, 2}, {0.90, 2, 3}}}};
inline constexpr SeverityTable gaussian_blur{"sigma_px", "", "", Destructive::increasing,
                                             {{{0.4}, {0.6}, {0.7}, {0.8}, {1.0}}}};
inline constexpr SeverityTable motion_blur{"length_px", "", "", Destructive::increasing,
                                           {{{2}, {3}, {4}, {5}, {6}}}};
inline constexpr SeverityTable zoom_blur{"max_zoom", "zoom_step", "", Destructive::increasing,
                                         {{{1.06, 0.01}, {1.11, 0.01}, {1.16, 0.02}, {1.21, 0.02}, {1.26, 0.03}}}};
inline constexpr SeverityTable fog{"strength", "wibble_decay", "", Destructive::increasing,
                                   {{{0.2, 3.0}, {0.5, 3.0}, {0.75, 2.5}, {1.0, 2.0}, {1.5, 1.75}}}};
inline constexpr SeverityTable brightness{"delta", "", "", Destructive::increasing,
                                          {{{0.1}, {0.2}, {0.3}, {0.4}, {0.5}}}};
inline constexpr SeverityTable contrast{"factor", "", "", Destructive::decreasing,
                                        {{{0.75}, {0.5}, {0.4}, {0.3}, {0.15}}}};
inline constexpr SeverityTable elastic{"displacement_frac", "smoothing_frac", "", Destructive::increasing,
                                       {{{0.04, 0.125}, {0.06, 0.125}, {0.08, 0.125}, {0.10, 0.125}, {0.12, 0.125}}}};
inline constexpr SeverityTable pixelate{"resolution_factor", "", "", Destructive::decreasing,
                                        {{{0.9}, {0.8}, {0.7}, {0.6}, {0.5}}}};
inline constexpr SeverityTable spatter{"blobs", "radius_frac", "opacity", Destructive::increasing,
                                       {{{1, 0.08, 0.7}, {2, 0.08, 0.7}, {3, 0.09, 0.7}, {4, 0.10, 0.7}, {6, 0.10, 0.7}}}};
inline constexpr SeverityTable zigzag{"lines", "", "", Destructive::increasing, {{{1}, {2}, {3}, {4}, {5}}}};
inline constexpr SeverityTable dotted_line{"lines", "dot_spacing_px", "", Destructive::increasing,
                                           {{{1, 3}, {2, 3}, {3, 3}, {4, 3}, {5, 3}}}};
inline constexpr SeverityTable rotate{"max_degrees", "", "", Destructive::increasing,
                                      {{{10}, {20}, {30}, {40}, {50}}}};
inline constexpr SeverityTable scale{"max_deviation", "", "", Destructive::increasing,
                                     {{{0.1}, {0.2}, {0.3}, {0.4}, {0.5}}}};
inline constexpr SeverityTable shear{"max_shear", "", "", Destructive::increasing,
                                     {{{0.1}, {0.2}, {0.3}, {0.4}, {0.5}}}};
inline constexpr SeverityTable stripe{"period_px", "", "", Destructive::decreasing, {{{8}, {6}, {4}, {3}, {2}}}};
inline constexpr SeverityTable translate{"max_shift_frac", "", "", Destructive::increasing,
                                         {{{0.05}, {0.10}, {0.15}, {0.20}, {0.25}}}};

}  // namespace severity

}  // namespace dafr2
