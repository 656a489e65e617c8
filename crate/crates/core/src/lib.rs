pub mod attribution;
pub mod builtin;
pub mod campaign;
pub mod coverage;
pub mod domain;
pub mod hash;
pub mod io;
pub mod lhs;
pub mod oracle;
pub mod report;
pub mod template;
