//! Micro-operations and the per-engine programs built from them.
//!
//! A worker walks one flat program per transaction attempt. Ops between two
//! step boundaries run atomically with respect to other workers.

use crate::config::{Engine, EngineKind, Isolation};
use crate::htm::Track;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaitKind {
    /// Update isolation wait on peers active at the snapshot.
    Iso,
    /// SGL holder waiting for in-flight peers to drain.
    Quiesce,
    /// Pruned durability wait on pre-begin non-durable peers.
    Dur,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FenceKind {
    Redo,
    Marker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    WaitSglFree,
    AcquireSgl,
    ReleaseSgl,
    /// Persist a deferred abort marker, then fence it.
    FencePendingAbort,
    ReadBeginTime,
    PublishActive,
    /// Publish active and back off if the SGL is held (non-HTM readers).
    PublishActiveChecked,
    HtmBegin(Track),
    Body,
    InvokeCommit,
    Suspend,
    Resume,
    PublishInactive,
    StampCommit,
    EnsureLogSpace,
    CopyRedoAsync,
    CopyRedoSync,
    AcquireDurTs,
    IsoSnapshot,
    QuiesceSnapshot,
    DurSnapshot,
    WaitSnapshot(WaitKind),
    PublishNonDurable,
    HtmCommit,
    Fence(FenceKind),
    EnsureMarkerSlot,
    WriteMarker,
    WriteInlineMarker,
    PublishClear,
    SphtSetPending,
    SphtReadClock,
    SphtAdvertise,
    SphtWait,
    SphtClear,
    Yield,
    Ack,
    /// Retire the worker.
    Done,
}

use FenceKind::*;
use Op::*;
use WaitKind::*;

const DUMBO_COMMIT_TAIL: [Op; 7] =
    [Fence(Redo), DurSnapshot, WaitSnapshot(Dur), EnsureMarkerSlot, WriteMarker, Fence(Marker), PublishClear];

macro_rules! dumbo_update {
    ($track:expr) => {
        &[
            FencePendingAbort,
            WaitSglFree,
            ReadBeginTime,
            PublishActive,
            HtmBegin($track),
            Body,
            InvokeCommit,
            Suspend,
            PublishInactive,
            StampCommit,
            EnsureLogSpace,
            CopyRedoAsync,
            AcquireDurTs,
            IsoSnapshot,
            Yield,
            WaitSnapshot(Iso),
            PublishNonDurable,
            Resume,
            HtmCommit,
            Yield,
            DUMBO_COMMIT_TAIL[0],
            DUMBO_COMMIT_TAIL[1],
            DUMBO_COMMIT_TAIL[2],
            DUMBO_COMMIT_TAIL[3],
            DUMBO_COMMIT_TAIL[4],
            DUMBO_COMMIT_TAIL[5],
            DUMBO_COMMIT_TAIL[6],
            Ack,
        ]
    };
}

const DUMBO_SI_UPDATE: &[Op] = dumbo_update!(Track::NoLoadTracking);
const DUMBO_OPA_UPDATE: &[Op] = dumbo_update!(Track::AnyAccess);

const DUMBO_RO: &[Op] = &[
    FencePendingAbort,
    WaitSglFree,
    ReadBeginTime,
    PublishActiveChecked,
    Body,
    InvokeCommit,
    PublishInactive,
    DurSnapshot,
    WaitSnapshot(Dur),
    Ack,
];

const DUMBO_SGL: &[Op] = &[
    FencePendingAbort,
    AcquireSgl,
    ReadBeginTime,
    PublishActive,
    QuiesceSnapshot,
    WaitSnapshot(Quiesce),
    Body,
    InvokeCommit,
    PublishInactive,
    StampCommit,
    EnsureLogSpace,
    CopyRedoAsync,
    AcquireDurTs,
    PublishNonDurable,
    ReleaseSgl,
    Yield,
    Fence(Redo),
    DurSnapshot,
    WaitSnapshot(Dur),
    EnsureMarkerSlot,
    WriteMarker,
    Fence(Marker),
    PublishClear,
    Ack,
];

const SPHT_TAIL: [Op; 8] =
    [EnsureLogSpace, CopyRedoSync, Fence(Redo), SphtWait, WriteInlineMarker, Fence(Marker), SphtClear, Ack];

const SPHT_UPDATE: &[Op] = &[
    WaitSglFree,
    ReadBeginTime,
    SphtSetPending,
    HtmBegin(Track::AnyAccess),
    Body,
    InvokeCommit,
    SphtReadClock,
    HtmCommit,
    SphtAdvertise,
    Yield,
    SPHT_TAIL[0],
    SPHT_TAIL[1],
    SPHT_TAIL[2],
    SPHT_TAIL[3],
    SPHT_TAIL[4],
    SPHT_TAIL[5],
    SPHT_TAIL[6],
    SPHT_TAIL[7],
];

const SPHT_RO: &[Op] = &[
    WaitSglFree,
    ReadBeginTime,
    HtmBegin(Track::AnyAccess),
    Body,
    InvokeCommit,
    SphtReadClock,
    HtmCommit,
    SphtWait,
    Ack,
];

const SPHT_SGL_UPDATE: &[Op] = &[
    AcquireSgl,
    ReadBeginTime,
    SphtSetPending,
    Body,
    InvokeCommit,
    SphtReadClock,
    SphtAdvertise,
    ReleaseSgl,
    Yield,
    SPHT_TAIL[0],
    SPHT_TAIL[1],
    SPHT_TAIL[2],
    SPHT_TAIL[3],
    SPHT_TAIL[4],
    SPHT_TAIL[5],
    SPHT_TAIL[6],
    SPHT_TAIL[7],
];

const SPHT_SGL_RO: &[Op] = &[AcquireSgl, ReadBeginTime, Body, InvokeCommit, SphtReadClock, ReleaseSgl, SphtWait, Ack];

const NAIVE_UPDATE: &[Op] = &[
    WaitSglFree,
    ReadBeginTime,
    PublishActive,
    SphtSetPending,
    HtmBegin(Track::NoLoadTracking),
    Body,
    InvokeCommit,
    Suspend,
    PublishInactive,
    IsoSnapshot,
    Yield,
    WaitSnapshot(Iso),
    Resume,
    SphtReadClock,
    HtmCommit,
    SphtAdvertise,
    Yield,
    SPHT_TAIL[0],
    SPHT_TAIL[1],
    SPHT_TAIL[2],
    SPHT_TAIL[3],
    SPHT_TAIL[4],
    SPHT_TAIL[5],
    SPHT_TAIL[6],
    SPHT_TAIL[7],
];

const NAIVE_RO: &[Op] = &[
    WaitSglFree,
    ReadBeginTime,
    PublishActiveChecked,
    Body,
    InvokeCommit,
    PublishInactive,
    SphtReadClock,
    SphtWait,
    Ack,
];

const NAIVE_SGL_UPDATE: &[Op] = &[
    AcquireSgl,
    ReadBeginTime,
    PublishActive,
    QuiesceSnapshot,
    WaitSnapshot(Quiesce),
    SphtSetPending,
    Body,
    InvokeCommit,
    PublishInactive,
    SphtReadClock,
    SphtAdvertise,
    ReleaseSgl,
    Yield,
    SPHT_TAIL[0],
    SPHT_TAIL[1],
    SPHT_TAIL[2],
    SPHT_TAIL[3],
    SPHT_TAIL[4],
    SPHT_TAIL[5],
    SPHT_TAIL[6],
    SPHT_TAIL[7],
];

const HTM_SGL: &[Op] = &[WaitSglFree, ReadBeginTime, HtmBegin(Track::AnyAccess), Body, InvokeCommit, HtmCommit, Ack];
const HTM_SGL_FALLBACK: &[Op] = &[AcquireSgl, ReadBeginTime, Body, InvokeCommit, ReleaseSgl, Ack];

/// Run after the last transaction.
pub const FINAL: &[Op] = &[FencePendingAbort, Done];

/// The program for one attempt.
pub fn program(engine: Engine, read_only: bool, sgl: bool) -> &'static [Op] {
    match (engine.kind, read_only, sgl) {
        (EngineKind::Dumbo, true, _) => DUMBO_RO,
        (EngineKind::Dumbo, false, true) => DUMBO_SGL,
        (EngineKind::Dumbo, false, false) => match engine.isolation {
            Isolation::Si => DUMBO_SI_UPDATE,
            Isolation::Opacity => DUMBO_OPA_UPDATE,
        },
        (EngineKind::Spht, true, false) => SPHT_RO,
        (EngineKind::Spht, true, true) => SPHT_SGL_RO,
        (EngineKind::Spht, false, false) => SPHT_UPDATE,
        (EngineKind::Spht, false, true) => SPHT_SGL_UPDATE,
        (EngineKind::NaiveCombo, true, _) => NAIVE_RO,
        (EngineKind::NaiveCombo, false, false) => NAIVE_UPDATE,
        (EngineKind::NaiveCombo, false, true) => NAIVE_SGL_UPDATE,
        (EngineKind::HtmSgl, _, false) => HTM_SGL,
        (EngineKind::HtmSgl, _, true) => HTM_SGL_FALLBACK,
    }
}

/// Whether the program for this transaction kind ever starts hardware
/// transactions (and can therefore fall back to the SGL).
pub fn uses_htm(engine: Engine, read_only: bool) -> bool {
    program(engine, read_only, false).iter().any(|op| matches!(op, HtmBegin(_)))
}
