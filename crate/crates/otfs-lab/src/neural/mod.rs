//! Learnable transceiver blocks and their persistence.

pub mod cenet;
pub mod checkpoint;
pub mod demapper;
pub mod dlzak;
pub mod threshold;
