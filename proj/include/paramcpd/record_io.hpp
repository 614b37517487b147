#pragma once

#include "paramcpd/binary_io.hpp"
#include "paramcpd/dataset.hpp"

namespace paramcpd {

// Shared binary encodings for records embedded in several file formats.
void write_prior(BinaryWriter& w, const PriorSpec& prior);
PriorSpec read_prior(BinaryReader& r);
void write_channel_stats(BinaryWriter& w, const ChannelStats& stats);
ChannelStats read_channel_stats(BinaryReader& r);

}  // namespace paramcpd
