#pragma once

#include <span>
#include <string>
#include <vector>

#include "egocast/pose.hpp"

namespace egocast {

// JSONL sequence format. Each sequence is a header line followed by one
// line per frame:
//
//   {"format":"egocast-seq","version":1,"skeleton":{"joints":[...],
//    "root_rule":[...]},"fps":30.0,"activity":"walk"}
//   {"i":0,"t":0.0,"p":[x,y,z],"y":[w,x,y,z],"q":[[x,y,z],...],"v":[...]}
//
// "q" is null when ground truth is withheld; "v" is absent when the frame
// carries no visual feature. Several sequences may share one file; each
// starts with its own header line. Doubles round-trip exactly.

std::string sequences_to_jsonl(std::span<const PoseSequence> sequences);

void write_sequences(const std::string& path, std::span<const PoseSequence> sequences);

std::vector<PoseSequence> read_sequences(const std::string& path);

// Parses JSONL text directly (used by read_sequences and tests).
std::vector<PoseSequence> parse_sequences(const std::string& text);

}  // namespace egocast
