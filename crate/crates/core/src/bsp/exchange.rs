use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::host::Assignment;

/// Bytes per receive-buffer slot: two 32-bit node-index words.
pub const RECEIVE_SLOT_BYTES: u64 = 8;
/// Bytes per send-buffer slot: one 64-bit reward.
pub const SEND_SLOT_BYTES: u64 = 8;

/// Modeled host/device link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterconnectModel {
    /// Seconds per transfer batch.
    pub init_latency: f64,
    pub per_byte: f64,
}

impl Default for InterconnectModel {
    fn default() -> Self {
        InterconnectModel { init_latency: 4.0e-5, per_byte: 0.0 }
    }
}

impl InterconnectModel {
    pub fn transfer(&self, bytes: u64) -> f64 {
        self.init_latency + self.per_byte * bytes as f64
    }
}

/// Send and receive buffers shared by the coordinator and `p` contexts.
///
/// A context only ever sees its own slot through [`Context`].
#[derive(Debug)]
pub struct ExchangeBuffers {
    receive: Vec<[AtomicU32; 2]>,
    send: Vec<AtomicU64>,
    sent: Vec<AtomicBool>,
}

impl ExchangeBuffers {
    pub fn new(p: usize) -> Self {
        ExchangeBuffers {
            receive: (0..p).map(|_| [AtomicU32::new(0), AtomicU32::new(0)]).collect(),
            send: (0..p).map(|_| AtomicU64::new(0)).collect(),
            sent: (0..p).map(|_| AtomicBool::new(false)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.send.len()
    }

    pub fn is_empty(&self) -> bool {
        self.send.is_empty()
    }

    /// Coordinator side: fill receive slot `j`.
    pub fn post(&self, j: usize, a: Assignment) {
        let w = a.to_words();
        self.receive[j][0].store(w[0], Ordering::Release);
        self.receive[j][1].store(w[1], Ordering::Release);
    }

    pub fn context(&self, id: usize) -> Context<'_> {
        assert!(id < self.len(), "context {id} outside buffer of {}", self.len());
        Context { buf: self, id }
    }

    /// Coordinator side: take all rewards, failing unless every context sent one.
    pub fn collect(&self) -> Result<Vec<f64>> {
        let present = self.sent.iter().filter(|s| s.load(Ordering::Acquire)).count();
        if present != self.len() {
            return Err(Error::RewardMismatch { traces: self.len(), rewards: present });
        }
        self.sent.iter().for_each(|s| s.store(false, Ordering::Release));
        Ok(self.send.iter().map(|v| f64::from_bits(v.load(Ordering::Acquire))).collect())
    }

    /// Bytes moved per iteration in each direction.
    pub fn payload_bytes(&self) -> (u64, u64) {
        let p = self.len() as u64;
        (p * RECEIVE_SLOT_BYTES, p * SEND_SLOT_BYTES)
    }
}

/// One context's view of the exchange buffers.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    buf: &'a ExchangeBuffers,
    id: usize,
}

impl Context<'_> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn receive(&self) -> Assignment {
        let s = &self.buf.receive[self.id];
        Assignment::from_words([s[0].load(Ordering::Acquire), s[1].load(Ordering::Acquire)])
    }

    pub fn send(&self, v: f64) {
        self.buf.send[self.id].store(v.to_bits(), Ordering::Release);
        self.buf.sent[self.id].store(true, Ordering::Release);
    }
}
