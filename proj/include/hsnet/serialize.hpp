#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hsnet/graph.hpp"

namespace hsnet {

/// Graph container, version 1. Layout is documented in docs/graph-format.md;
/// doubles are stored as their IEEE-754 bit patterns so a round trip is exact.
constexpr std::uint32_t kGraphFormatVersion = 1;

std::vector<std::uint8_t> encode_graph(const NetworkGraph& graph);
NetworkGraph decode_graph(std::span<const std::uint8_t> bytes);

void save_graph(const std::filesystem::path& path, const NetworkGraph& graph);
NetworkGraph load_graph(const std::filesystem::path& path);

}  // namespace hsnet
