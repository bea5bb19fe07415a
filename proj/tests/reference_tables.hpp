#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace glomseg::reference {

struct SslRow {
  std::string_view dataset;
  std::string_view method;
  double precision, recall, dice;
};

/// Published precision / recall / Dice for supervised, FixMatch and UniMatch
/// models on the three external validation sets.
inline constexpr std::array<SslRow, 9> kSslResults{{
    {"HuBMAP Vasculature", "Supervised baseline", 0.95, 0.50, 0.66},
    {"HuBMAP Vasculature", "FixMatch", 0.85, 0.74, 0.79},
    {"HuBMAP Vasculature", "UniMatch", 0.85, 0.75, 0.80},
    {"KPMP", "Supervised baseline", 0.95, 0.61, 0.74},
    {"KPMP", "FixMatch", 0.94, 0.63, 0.76},
    {"KPMP", "UniMatch", 0.94, 0.64, 0.76},
    {"NURTuRE Labelled", "Supervised baseline", 0.82, 0.52, 0.64},
    {"NURTuRE Labelled", "FixMatch", 0.82, 0.56, 0.67},
    {"NURTuRE Labelled", "UniMatch", 0.82, 0.57, 0.68},
}};

struct ParamRow {
  std::string_view model;
  double millions;
};

/// Published parameter counts: SegFormer b0..b5 and the attention U-Net.
inline constexpr std::array<ParamRow, 7> kParamCounts{{
    {"b0", 3.7},
    {"b1", 13.7},
    {"b2", 24.7},
    {"b3", 44.6},
    {"b4", 61.4},
    {"b5", 82.0},
    {"att_unet", 134.1},
}};

}  // namespace glomseg::reference
