//! Communication structure of a finite SMDP.
//!
//! A model is weakly communicating when it has a unique closed communicating
//! class `C` and every state outside `C` is transient under every stationary
//! policy. Closed communicating classes are exactly the closed strongly
//! connected components of the "some action" graph `G_any` (edge `s -> s'`
//! iff `p_ss'^a > 0` for some `a`). Transience outside `C` fails iff some
//! nonempty set `W` disjoint from `C` can be kept closed by choosing, in each
//! of its states, an action whose support stays in `W`; the largest such set
//! is found by repeatedly discarding states that have no such action.

use serde::Serialize;

use super::SmdpModel;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum CommunicationClass {
    WeaklyCommunicating { closed_class: Vec<usize>, transient: Vec<usize> },
    NotWeaklyCommunicating(NotWeaklyCommunicating),
}

impl CommunicationClass {
    pub fn is_weakly_communicating(&self) -> bool {
        matches!(self, CommunicationClass::WeaklyCommunicating { .. })
    }
}

/// Why a model fails to be weakly communicating.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum NotWeaklyCommunicating {
    /// More than one closed strongly connected component in `G_any`.
    MultipleClosedClasses { classes: Vec<Vec<usize>> },
    /// States outside the closed class that the listed `(state, action)`
    /// choices keep closed, so they are recurrent under some policy.
    TrappingSet { states: Vec<usize>, actions: Vec<(usize, usize)> },
}

/// Strongly connected components of a directed graph given by adjacency
/// lists (iterative Tarjan). Components come out in reverse topological
/// order; states inside a component are sorted.
pub fn strongly_connected_components(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = adjacency.len();
    let mut index = vec![UNVISITED; n];
    let mut lowlink = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next_index = 0;
    // (node, position in its adjacency list)
    let mut call_stack: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call_stack.push((root, 0));
        index[root] = next_index;
        lowlink[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call_stack.last_mut() {
            if *pos < adjacency[v].len() {
                let w = adjacency[v][*pos];
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call_stack.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
                continue;
            }
            call_stack.pop();
            if let Some(&(parent, _)) = call_stack.last() {
                lowlink[parent] = lowlink[parent].min(lowlink[v]);
            }
            if lowlink[v] == index[v] {
                let mut component = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                component.sort_unstable();
                components.push(component);
            }
        }
    }
    components
}

/// Components with no edge leaving them.
pub(crate) fn closed_components(adjacency: &[Vec<usize>], components: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut owner = vec![0; adjacency.len()];
    for (k, comp) in components.iter().enumerate() {
        for &s in comp {
            owner[s] = k;
        }
    }
    let mut closed: Vec<Vec<usize>> = components
        .iter()
        .enumerate()
        .filter(|(k, comp)| comp.iter().all(|&s| adjacency[s].iter().all(|&t| owner[t] == *k)))
        .map(|(_, comp)| comp.clone())
        .collect();
    closed.sort();
    closed
}

fn some_action_graph(model: &SmdpModel) -> Vec<Vec<usize>> {
    (0..model.num_states())
        .map(|s| {
            let mut next: Vec<usize> = (0..model.num_actions())
                .flat_map(|a| model.successors(model.pair_index(s, a)).iter().map(|&(t, _)| t))
                .collect();
            next.sort_unstable();
            next.dedup();
            next
        })
        .collect()
}

pub fn classify_communication(model: &SmdpModel) -> CommunicationClass {
    let graph = some_action_graph(model);
    let components = strongly_connected_components(&graph);
    let closed = closed_components(&graph, &components);
    if closed.len() != 1 {
        return CommunicationClass::NotWeaklyCommunicating(NotWeaklyCommunicating::MultipleClosedClasses {
            classes: closed,
        });
    }
    let closed_class = closed.into_iter().next().expect("one closed class");
    let mut in_candidate = vec![true; model.num_states()];
    for &s in &closed_class {
        in_candidate[s] = false;
    }

    let support_inside =
        |s: usize, a: usize, inside: &[bool]| model.successors(model.pair_index(s, a)).iter().all(|&(t, _)| inside[t]);
    loop {
        let doomed: Vec<usize> = (0..model.num_states())
            .filter(|&s| in_candidate[s] && !(0..model.num_actions()).any(|a| support_inside(s, a, &in_candidate)))
            .collect();
        if doomed.is_empty() {
            break;
        }
        for s in doomed {
            in_candidate[s] = false;
        }
    }

    let trapped: Vec<usize> = (0..model.num_states()).filter(|&s| in_candidate[s]).collect();
    if !trapped.is_empty() {
        let actions = trapped
            .iter()
            .map(|&s| {
                let a = (0..model.num_actions()).find(|&a| support_inside(s, a, &in_candidate)).expect("fixed point");
                (s, a)
            })
            .collect();
        return CommunicationClass::NotWeaklyCommunicating(NotWeaklyCommunicating::TrappingSet {
            states: trapped,
            actions,
        });
    }
    let transient = (0..model.num_states()).filter(|s| closed_class.binary_search(s).is_err()).collect();
    CommunicationClass::WeaklyCommunicating { closed_class, transient }
}
