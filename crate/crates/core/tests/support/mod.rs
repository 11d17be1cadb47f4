#![allow(dead_code)]

pub mod handshake;
pub mod lessons;
