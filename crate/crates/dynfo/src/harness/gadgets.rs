//! Fixture generators for the worked constructions: graph families whose
//! shape under specific change operations is known exactly.

// Filled in alongside the reachability maintainers.
