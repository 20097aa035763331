use crate::message::Message;
use crate::types::Timeslot;
use crate::wrapper::{wrapper_step, Process, StepOutput, WrapperState};

/// A corrupted process that runs the correct protocol under the adversary's
/// control. Its output is filtered by the strategy before it is sent.
#[derive(Debug)]
pub struct Puppet {
    pub proc: Process,
    pub state: WrapperState,
    pub offset: Timeslot,
    buffered: Vec<Message>,
}

impl Puppet {
    pub fn new(proc: Process, offset: Timeslot) -> Self {
        let state = WrapperState::new(&proc);
        Puppet {
            proc,
            state,
            offset,
            buffered: Vec::new(),
        }
    }

    /// One global slot. Returns `None` before the puppet's clock starts.
    pub fn step(&mut self, t: Timeslot, inbox: Vec<Message>) -> Option<StepOutput> {
        self.buffered.extend(inbox);
        if t < self.offset {
            return None;
        }
        let inbox = std::mem::take(&mut self.buffered);
        Some(wrapper_step(&self.proc, &mut self.state, t - self.offset, inbox))
    }
}
