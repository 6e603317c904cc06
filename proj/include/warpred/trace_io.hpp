#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "warpred/reducers.hpp"
#include "warpred/workload.hpp"

// Trace and request-stream persistence.
//
// Text form (the interchange format), one record per line after a header:
//   WRTRACE v1; N=<params>; seed=<seed>
//   warp_id,iteration,active_mask_hex,prim_ids(32, '-' for inactive),grads
// where grads holds the 32 lanes ';'-separated, each lane's N values
// ','-separated. The '-' convention drops inactive lanes' primitive
// references; the binary form below preserves them along with the full
// scene spec.

namespace warpred::trace_io {

void save_trace_csv(const workload::Trace& trace, std::ostream& out);
void save_trace_csv(const workload::Trace& trace, const std::string& path);
workload::Trace load_trace_csv(std::istream& in);
workload::Trace load_trace_csv(const std::string& path);

// Compact little-endian, length-prefixed binary form; lossless.
void save_trace_binary(const workload::Trace& trace, std::ostream& out);
void save_trace_binary(const workload::Trace& trace, const std::string& path);
workload::Trace load_trace_binary(std::istream& in);
workload::Trace load_trace_binary(const std::string& path);

// Request streams use the same container conventions:
//   WRREQS v1
//   prim,param,value,sm,subcore,warp
void save_requests_csv(std::span<const reducers::AtomicRequest> requests,
                       std::ostream& out);
std::vector<reducers::AtomicRequest> load_requests_csv(std::istream& in);
void save_requests_binary(std::span<const reducers::AtomicRequest> requests,
                          std::ostream& out);
std::vector<reducers::AtomicRequest> load_requests_binary(std::istream& in);

}  // namespace warpred::trace_io
