//! Language-level analysis of Verilog text: candidate extraction from model
//! output, port declaration parsing across the four declaration styles,
//! zombie-port detection, and the code-structure checklist.
//!
//! Parsing here is deliberately regex-grade. Full syntax checking is the job
//! of the external tool configured in the validation layer; this module only
//! needs to be reliable on the interface surface (ports, module boundaries)
//! that the refinement loop reasons about.

mod extract;
mod ports;
mod strip;
mod structure;
mod usage;

pub use extract::{extract_code, ExtractError, ExtractedCandidate, ExtractionRule};
pub use ports::{locate_first_module, parse_ports, ModuleHeader, PortDecl, PortDirection, PortParseError, PortStyle};
pub use strip::strip_comments_and_strings;
pub use structure::{score_structure, CodeStructureReport};
pub use usage::{analyze_port_usage, PortUsageReport};
