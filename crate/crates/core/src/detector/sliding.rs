//! Sliding-window cascade evaluation over a pooled channel stack.

use alloc::vec::Vec;

use crate::boosting::{CascadeMode, CascadeOutcome, SoftCascadeModel};
use crate::channels::ChannelStack;

/// A cascade bound to one stack: every tree node's feature index is turned
/// into an offset relative to the window's top-left cell, so a window's
/// features are read straight out of the stack.
pub struct CompiledCascade<'a> {
    model: &'a SoftCascadeModel,
    data: &'a [f32],
    width: usize,
    height: usize,
    grid: usize,
    offsets: Vec<[u32; 3]>,
}

impl<'a> CompiledCascade<'a> {
    pub fn new(model: &'a SoftCascadeModel, stack: &'a ChannelStack) -> Self {
        let g = model.grid();
        let (w, h) = (stack.width(), stack.height());
        let offset = |f: u32| -> u32 {
            let f = f as usize;
            let (c, rest) = (f / (g * g), f % (g * g));
            let (y, x) = (rest / g, rest % g);
            ((c * h + y) * w + x) as u32
        };
        let offsets = model
            .trees
            .iter()
            .map(|wt| wt.tree.nodes.map(|n| offset(n.feature)))
            .collect();
        CompiledCascade {
            model,
            data: stack.data(),
            width: w,
            height: h,
            grid: g,
            offsets,
        }
    }

    /// Window positions along each axis: `0..=dim - grid`.
    pub fn positions(&self) -> (usize, usize) {
        (
            (self.width + 1).saturating_sub(self.grid),
            (self.height + 1).saturating_sub(self.grid),
        )
    }

    #[inline]
    pub fn evaluate_at(&self, x: usize, y: usize, mode: CascadeMode) -> CascadeOutcome {
        debug_assert!(x + self.grid <= self.width && y + self.grid <= self.height);
        let window = &self.data[y * self.width + x..];
        self.model
            .evaluate_by(mode, |t, n| window[self.offsets[t][n] as usize])
    }

    /// Evaluates every window on a `stride`-cell lattice, row by row.
    pub fn scan(&self, stride: usize, mode: CascadeMode, mut visit: impl FnMut(usize, usize, CascadeOutcome)) {
        let (nx, ny) = self.positions();
        for y in (0..ny).step_by(stride.max(1)) {
            for x in (0..nx).step_by(stride.max(1)) {
                visit(x, y, self.evaluate_at(x, y, mode));
            }
        }
    }
}
