#![allow(dead_code)]

pub mod fd;
pub mod gradcheck;
pub mod jacobi;
