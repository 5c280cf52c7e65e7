pub mod brute;
pub mod oracle;
