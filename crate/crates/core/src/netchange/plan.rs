//! Architecture alignment: union construction and stage-aligned diffs.
//!
//! Two architectures are aligned segment by segment (each convolutional stage,
//! then the dense head) and position by position from the start of each
//! segment.

use crate::error::{Error, Result};
use crate::nn::{Activation, ArchitectureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformStep {
    /// Grow the layer at `layer_index` to `target_width` neurons/channels.
    Widen { layer_index: usize, target_width: usize },
    /// Insert an identity layer at `insert_index`, shaped like the layer at
    /// `template_layer_index`.
    Deepen {
        insert_index: usize,
        template_layer_index: usize,
    },
    /// Keep the first `target_width` neurons/channels of the layer.
    Narrow { layer_index: usize, target_width: usize },
    /// Remove the layer at `remove_index`.
    Shallow { remove_index: usize },
}

impl TransformStep {
    pub fn is_growing(&self) -> bool {
        matches!(self, TransformStep::Widen { .. } | TransformStep::Deepen { .. })
    }
}

/// Steps converting one architecture into another. Layer indices refer to the
/// intermediate architecture produced by the preceding steps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransformPlan {
    pub steps: Vec<TransformStep>,
}

impl TransformPlan {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    /// Only Deepen/Widen steps.
    pub fn is_growing(&self) -> bool {
        self.steps.iter().all(TransformStep::is_growing)
    }
}

fn check_same_frame(a: &ArchitectureSpec, b: &ArchitectureSpec, a_name: &str, b_name: &str) -> Result<()> {
    if a.input_shape() != b.input_shape() {
        return Err(Error::Incompatible(format!(
            "{b_name} has input shape {} but {a_name} has {}",
            b.input_shape(),
            a.input_shape()
        )));
    }
    if a.num_classes() != b.num_classes() {
        return Err(Error::Incompatible(format!(
            "{b_name} has {} classes but {a_name} has {}",
            b.num_classes(),
            a.num_classes()
        )));
    }
    if a.num_stages() != b.num_stages() {
        return Err(Error::Incompatible(format!(
            "{b_name} has {} stages but {a_name} has {}",
            b.num_stages(),
            a.num_stages()
        )));
    }
    let (ha, hb) = (a.segment_widths().last().unwrap().len(), b.segment_widths().last().unwrap().len());
    if (ha == 0) != (hb == 0) {
        return Err(Error::Incompatible(format!(
            "{b_name} has {hb} hidden head layers but {a_name} has {ha}; a head cannot be grown from \
             or shrunk to nothing"
        )));
    }
    Ok(())
}

/// The smallest architecture containing every input: per segment, the
/// maximum depth; per aligned position, the maximum width, where an
/// architecture shorter than the union contributes its last width at the
/// positions it lacks (the width an identity layer appended to it would have).
///
/// Every input can therefore be grown into the union with Deepen and Widen
/// steps only.
pub fn union_arch(archs: &[ArchitectureSpec]) -> Result<ArchitectureSpec> {
    let first = archs
        .first()
        .ok_or_else(|| Error::Input("union of an empty architecture list".into()))?;
    for (i, a) in archs.iter().enumerate().skip(1) {
        check_same_frame(first, a, "architecture #0", &format!("architecture #{i}"))?;
    }
    let widths: Vec<Vec<Vec<usize>>> = archs.iter().map(|a| a.segment_widths()).collect();
    let acts: Vec<Vec<Vec<Activation>>> = archs.iter().map(|a| a.segment_activations()).collect();
    let num_segments = widths[0].len();
    let mut segments: Vec<Vec<(usize, Activation)>> = Vec::with_capacity(num_segments);
    for seg in 0..num_segments {
        let depth = widths.iter().map(|w| w[seg].len()).max().unwrap_or(0);
        let mut out = Vec::with_capacity(depth);
        for pos in 0..depth {
            let mut width = 0;
            let mut act: Option<(usize, Activation)> = None;
            for (i, w) in widths.iter().enumerate() {
                let ws = &w[seg];
                let Some(&last) = ws.last() else { continue };
                width = width.max(*ws.get(pos).unwrap_or(&last));
                if let Some(&a) = acts[i][seg].get(pos) {
                    match act {
                        Some((j, prev)) if prev != a => {
                            return Err(Error::Incompatible(format!(
                                "architectures #{j} and #{i} disagree on the activation at segment \
                                 {seg}, position {pos}"
                            )))
                        }
                        None => act = Some((i, a)),
                        _ => {}
                    }
                }
            }
            out.push((width, act.map(|(_, a)| a).unwrap_or(Activation::Relu)));
        }
        segments.push(out);
    }
    let head = segments.pop().unwrap_or_default();
    ArchitectureSpec::from_segments(first.input_shape(), first.num_classes(), &segments, &head)
}

/// Tracks where each segment's layers sit while a plan is being built.
struct Layout {
    depths: Vec<usize>,
}

impl Layout {
    fn index(&self, seg: usize, pos: usize) -> usize {
        let stages = self.depths.len() - 1;
        if seg < stages {
            self.depths[..seg].iter().map(|d| d + 1).sum::<usize>() + pos
        } else {
            // all stages with their pools, then flatten
            self.depths[..stages].iter().map(|d| d + 1).sum::<usize>() + 1 + pos
        }
    }
}

/// Fewest-step stage-aligned plan from `src` to `dst`.
///
/// Per segment, in order: Deepen (append identity layers at the end of the
/// segment), Widen, Narrow, then Shallow (trailing layers are first resized
/// to the width feeding them so that they can be spliced out).
pub fn diff_arch(src: &ArchitectureSpec, dst: &ArchitectureSpec) -> Result<TransformPlan> {
    check_same_frame(src, dst, "source", "destination")?;
    let src_w = src.segment_widths();
    let dst_w = dst.segment_widths();
    let mut layout = Layout {
        depths: src_w.iter().map(Vec::len).collect(),
    };
    let mut steps = Vec::new();
    for (seg, (from, to)) in src_w.iter().zip(&dst_w).enumerate() {
        let mut cur = from.clone();
        while cur.len() < to.len() {
            let pos = cur.len();
            steps.push(TransformStep::Deepen {
                insert_index: layout.index(seg, pos),
                template_layer_index: layout.index(seg, pos - 1),
            });
            cur.push(cur[pos - 1]);
            layout.depths[seg] += 1;
        }
        for pos in 0..to.len() {
            if to[pos] > cur[pos] {
                steps.push(TransformStep::Widen {
                    layer_index: layout.index(seg, pos),
                    target_width: to[pos],
                });
                cur[pos] = to[pos];
            }
        }
        for pos in 0..to.len() {
            if to[pos] < cur[pos] {
                steps.push(TransformStep::Narrow {
                    layer_index: layout.index(seg, pos),
                    target_width: to[pos],
                });
                cur[pos] = to[pos];
            }
        }
        if cur.len() > to.len() {
            let feed = cur[to.len() - 1];
            for pos in to.len()..cur.len() {
                let layer_index = layout.index(seg, pos);
                if cur[pos] > feed {
                    steps.push(TransformStep::Narrow {
                        layer_index,
                        target_width: feed,
                    });
                } else if cur[pos] < feed {
                    steps.push(TransformStep::Widen {
                        layer_index,
                        target_width: feed,
                    });
                }
                cur[pos] = feed;
            }
            for _ in to.len()..cur.len() {
                steps.push(TransformStep::Shallow {
                    remove_index: layout.index(seg, to.len()),
                });
                layout.depths[seg] -= 1;
            }
        }
    }
    Ok(TransformPlan { steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::InputShape;
    use proptest::prelude::*;

    fn arch(s: &str) -> ArchitectureSpec {
        s.parse().unwrap()
    }

    fn micro(depth: usize, width: usize) -> ArchitectureSpec {
        ArchitectureSpec::from_widths(
            InputShape::new(1, 16, 16),
            10,
            &[vec![width; depth], vec![2 * width; depth]],
            &[32],
        )
        .unwrap()
    }

    #[test]
    fn union_of_one_is_itself() {
        let a = arch("in=1x16x16 classes=10 stages=[c8,c8|c16] head=[d32] widen={s0.l1:12}");
        assert_eq!(union_arch(std::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn union_of_micro_variants() {
        // d2-w8: [8,8 | 16,16], d3-w8: [8,8,8 | 16,16,16], d2-w16: [16,16 | 32,32].
        // Extending the depth-2 variants by their last width and taking the
        // positionwise max gives [16,16,16 | 32,32,32].
        let u = union_arch(&[micro(2, 8), micro(3, 8), micro(2, 16)]).unwrap();
        assert_eq!(u.segment_widths(), vec![vec![16, 16, 16], vec![32, 32, 32], vec![32]]);
        assert_eq!(u, micro(3, 16));
    }

    #[test]
    fn union_of_vgg_family_is_the_widest_deepest_member() {
        // Five stages; VGG-16/19 differ from VGG-13 in the depth of stages 3-5,
        // the "wider" variants widen one layer of stage 4.
        let input = InputShape::new(3, 32, 32);
        let base = [64, 128, 256, 512, 512];
        let make = |depths: [usize; 5], widen: Option<(usize, usize, usize)>| {
            let mut stages: Vec<Vec<usize>> = depths.iter().zip(base).map(|(&d, w)| vec![w; d]).collect();
            if let Some((s, l, w)) = widen {
                stages[s][l] = w;
            }
            ArchitectureSpec::from_widths(input, 10, &stages, &[512, 512]).unwrap()
        };
        let vgg13 = make([2, 2, 2, 2, 2], None);
        let vgg16_wider = make([2, 2, 3, 3, 3], Some((3, 1, 768)));
        let vgg19 = make([2, 2, 4, 4, 4], None);
        let vgg19_wider = make([2, 2, 4, 4, 4], Some((3, 1, 768)));
        let u = union_arch(&[vgg13, vgg16_wider, vgg19, vgg19_wider.clone()]).unwrap();
        assert_eq!(u, vgg19_wider);
    }

    #[test]
    fn union_rejects_mismatched_stage_counts() {
        let err = union_arch(&[
            arch("in=1x8x8 classes=10 stages=[c4|c4] head=[d8]"),
            arch("in=1x8x8 classes=10 stages=[c4] head=[d8]"),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Incompatible(ref m) if m.contains("#1")), "{err}");
        let err = union_arch(&[
            arch("in=1x8x8 classes=10 stages=[c4] head=[d8]"),
            arch("in=1x8x8 classes=10 stages=[c4] head=[d8]"),
            arch("in=1x6x6 classes=10 stages=[c4] head=[d8]"),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Incompatible(ref m) if m.contains("#2")), "{err}");
        assert!(union_arch(&[]).is_err());
    }

    #[test]
    fn diff_of_equal_is_empty() {
        let a = micro(2, 8);
        assert!(diff_arch(&a, &a).unwrap().is_empty());
    }

    #[test]
    fn diff_missing_conv_in_second_stage() {
        let src = arch("in=1x16x16 classes=10 stages=[c8,c8|c16] head=[d32]");
        let dst = arch("in=1x16x16 classes=10 stages=[c8,c8|c16,c16] head=[d32]");
        // layers: c0 c1 pool2 | c3 pool4 ...; insert at 4, template 3
        assert_eq!(
            diff_arch(&src, &dst).unwrap().steps,
            vec![TransformStep::Deepen {
                insert_index: 4,
                template_layer_index: 3
            }]
        );
    }

    #[test]
    fn diff_deepen_then_widen() {
        let src = arch("in=1x16x16 classes=10 stages=[c8|c16] head=[d32]");
        let dst = arch("in=1x16x16 classes=10 stages=[c12,c12|c16] head=[d32]");
        let plan = diff_arch(&src, &dst).unwrap();
        assert_eq!(
            plan.steps,
            vec![
                TransformStep::Deepen {
                    insert_index: 1,
                    template_layer_index: 0
                },
                TransformStep::Widen {
                    layer_index: 0,
                    target_width: 12
                },
                TransformStep::Widen {
                    layer_index: 1,
                    target_width: 12
                },
            ]
        );
        assert!(plan.is_growing());
    }

    #[test]
    fn diff_shrink_resizes_trailing_layers_before_removal() {
        let src = arch("in=1x16x16 classes=10 stages=[c16,c16,c8|c16] head=[d32,d64]");
        let dst = arch("in=1x16x16 classes=10 stages=[c8|c16] head=[d32]");
        let plan = diff_arch(&src, &dst).unwrap();
        assert_eq!(
            plan.steps,
            vec![
                TransformStep::Narrow {
                    layer_index: 0,
                    target_width: 8
                },
                TransformStep::Narrow {
                    layer_index: 1,
                    target_width: 8
                },
                TransformStep::Shallow { remove_index: 1 },
                TransformStep::Shallow { remove_index: 1 },
                // stage 0 is now [c8] + pool, stage 1 [c16] + pool, flatten at 4
                TransformStep::Narrow {
                    layer_index: 6,
                    target_width: 32
                },
                TransformStep::Shallow { remove_index: 6 },
            ]
        );
    }

    #[test]
    fn diff_rejects_growing_an_empty_head() {
        let src = arch("in=1x8x8 classes=10 stages=[c4] head=[]");
        let dst = arch("in=1x8x8 classes=10 stages=[c4] head=[d8]");
        assert!(matches!(diff_arch(&src, &dst), Err(Error::Incompatible(_))));
    }

    fn arb_family_member() -> impl Strategy<Value = ArchitectureSpec> {
        (
            prop::collection::vec(1usize..10, 1..4),
            prop::collection::vec(1usize..10, 1..4),
            prop::collection::vec(1usize..12, 1..3),
        )
            .prop_map(|(s0, s1, head)| {
                ArchitectureSpec::from_widths(InputShape::new(2, 8, 8), 5, &[s0, s1], &head).unwrap()
            })
    }

    proptest! {
        #[test]
        fn union_is_idempotent_commutative_associative(
            a in arb_family_member(),
            b in arb_family_member(),
            c in arb_family_member(),
        ) {
            let ab = union_arch(&[a.clone(), b.clone()]).unwrap();
            prop_assert_eq!(&union_arch(&[a.clone(), a.clone()]).unwrap(), &a);
            prop_assert_eq!(&ab, &union_arch(&[b.clone(), a.clone()]).unwrap());
            let ab_c = union_arch(&[ab, c.clone()]).unwrap();
            let bc = union_arch(&[b.clone(), c.clone()]).unwrap();
            let a_bc = union_arch(&[a.clone(), bc]).unwrap();
            prop_assert_eq!(&ab_c, &a_bc);
            prop_assert_eq!(&ab_c, &union_arch(&[a.clone(), b.clone(), c.clone()]).unwrap());
        }

        #[test]
        fn plans_into_the_union_only_grow(a in arb_family_member(), b in arb_family_member()) {
            let u = union_arch(&[a.clone(), b.clone()]).unwrap();
            prop_assert!(diff_arch(&a, &u).unwrap().is_growing());
            prop_assert!(diff_arch(&b, &u).unwrap().is_growing());
        }
    }
}
