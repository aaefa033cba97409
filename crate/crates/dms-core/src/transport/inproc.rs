//! In-process queue backend.
//!
//! Queues are in-memory FIFO buffers behind a shared broker. A queue is
//! created by its single consumer together with a [`Notifier`]; any number
//! of producers may then open senders by name. Both of an LP's queues are
//! usually registered against one notifier, so the engine can sleep until
//! something arrives on either.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::{MessageSender, TimestampedMessage, TransportError};

/// Wakes a sleeping consumer. Each notify bumps a generation counter, so a
/// consumer that snapshots the generation before draining its queues can
/// never miss a message that arrives in between.
pub struct Notifier {
    generation: Mutex<u64>,
    cv: Condvar,
}

impl Notifier {
    pub fn new() -> Arc<Notifier> {
        Arc::new(Notifier {
            generation: Mutex::new(0),
            cv: Condvar::new(),
        })
    }

    pub fn notify(&self) {
        let mut g = self.generation.lock().unwrap();
        *g += 1;
        drop(g);
        self.cv.notify_all();
    }

    pub fn snapshot(&self) -> u64 {
        *self.generation.lock().unwrap()
    }

    /// Blocks until the generation moves past `seen` or the timeout runs
    /// out, whichever is first. Returns the current generation.
    pub fn wait_newer(&self, seen: u64, timeout: Duration) -> u64 {
        let g = self.generation.lock().unwrap();
        let (g, _) = self
            .cv
            .wait_timeout_while(g, timeout, |g| *g == seen)
            .unwrap();
        *g
    }
}

struct QueueState {
    messages: VecDeque<TimestampedMessage>,
    closed: bool,
}

struct QueueCore {
    name: String,
    state: Mutex<QueueState>,
    notifier: Arc<Notifier>,
}

impl QueueCore {
    fn push(&self, msg: TimestampedMessage) -> Result<(), TransportError> {
        let mut st = self.state.lock().unwrap();
        if st.closed {
            return Err(TransportError::Closed(self.name.clone()));
        }
        st.messages.push_back(msg);
        drop(st);
        self.notifier.notify();
        Ok(())
    }
}

/// Consumer handle. Not clonable: one consumer per queue.
pub struct Receiver {
    core: Arc<QueueCore>,
}

impl std::fmt::Debug for Receiver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Receiver").field("queue", &self.core.name).finish()
    }
}

impl Receiver {
    /// Takes the next message without blocking.
    pub fn poll(&self) -> Option<TimestampedMessage> {
        self.core.state.lock().unwrap().messages.pop_front()
    }

    /// Drains whatever has arrived so far, invoking the callback outside
    /// the queue lock. Messages sent while a callback runs are delivered
    /// on the same call if they arrive in time, otherwise on the next.
    pub fn deliver_with(&self, mut callback: impl FnMut(TimestampedMessage)) -> usize {
        let mut count = 0;
        while let Some(msg) = self.poll() {
            callback(msg);
            count += 1;
        }
        count
    }

    pub fn name(&self) -> &str {
        &self.core.name
    }
}

impl Drop for Receiver {
    fn drop(&mut self) {
        self.core.state.lock().unwrap().closed = true;
    }
}

/// Producer handle for one queue. Cheap to clone.
#[derive(Clone)]
pub struct InprocSender {
    core: Arc<QueueCore>,
}

impl MessageSender for InprocSender {
    fn send(&self, msg: &TimestampedMessage) -> Result<(), TransportError> {
        self.core.push(msg.clone())
    }
}

/// Registry of queues living in this process.
#[derive(Clone)]
pub struct Broker {
    queues: Arc<Mutex<HashMap<String, Arc<QueueCore>>>>,
}

impl Broker {
    pub fn new() -> Broker {
        Broker {
            queues: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    /// Creates a queue and hands back its single consumer handle.
    pub fn create_queue(
        &self,
        name: &str,
        notifier: Arc<Notifier>,
    ) -> Result<Receiver, TransportError> {
        let mut map = self.queues.lock().unwrap();
        if map.contains_key(name) {
            return Err(TransportError::AlreadyBound(name.to_string()));
        }
        let core = Arc::new(QueueCore {
            name: name.to_string(),
            state: Mutex::new(QueueState {
                messages: VecDeque::new(),
                closed: false,
            }),
            notifier,
        });
        map.insert(name.to_string(), core.clone());
        Ok(Receiver { core })
    }

    /// Opens a producer handle to an existing queue.
    pub fn sender(&self, name: &str) -> Result<InprocSender, TransportError> {
        let map = self.queues.lock().unwrap();
        let core = map
            .get(name)
            .ok_or_else(|| TransportError::UnknownQueue(name.to_string()))?;
        Ok(InprocSender { core: core.clone() })
    }

    /// Used by the TCP endpoint, which feeds decoded frames into local
    /// queues from its reader threads.
    pub(crate) fn raw_push(
        &self,
        name: &str,
        msg: TimestampedMessage,
    ) -> Result<(), TransportError> {
        let core = {
            let map = self.queues.lock().unwrap();
            map.get(name)
                .ok_or_else(|| TransportError::UnknownQueue(name.to_string()))?
                .clone()
        };
        core.push(msg)
    }
}

impl Default for Broker {
    fn default() -> Self {
        Broker::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::SimTime;
    use crate::transport::MessageKind;

    fn data(t: f64, seq: u64) -> TimestampedMessage {
        TimestampedMessage {
            kind: MessageKind::Data,
            timestamp: SimTime::new(t),
            label: "A".into(),
            body: "1".into(),
            seq,
        }
    }

    #[test]
    fn fifo_per_queue() {
        let broker = Broker::new();
        let n = Notifier::new();
        let rx = broker.create_queue("pq-B", n).unwrap();
        let tx = broker.sender("pq-B").unwrap();
        for i in 0..100 {
            tx.send(&data(i as f64, i)).unwrap();
        }
        for i in 0..100 {
            assert_eq!(rx.poll().unwrap().seq, i);
        }
        assert!(rx.poll().is_none());
    }

    #[test]
    fn second_consumer_is_rejected() {
        let broker = Broker::new();
        let _rx = broker.create_queue("pq-B", Notifier::new()).unwrap();
        let err = broker.create_queue("pq-B", Notifier::new()).unwrap_err();
        assert!(matches!(err, TransportError::AlreadyBound(_)));
    }

    #[test]
    fn unknown_queue_is_an_error() {
        let broker = Broker::new();
        assert!(matches!(
            broker.sender("pq-missing"),
            Err(TransportError::UnknownQueue(_))
        ));
    }

    #[test]
    fn send_after_consumer_drop_fails() {
        let broker = Broker::new();
        let rx = broker.create_queue("pq-B", Notifier::new()).unwrap();
        let tx = broker.sender("pq-B").unwrap();
        drop(rx);
        assert!(matches!(
            tx.send(&data(1.0, 1)),
            Err(TransportError::Closed(_))
        ));
    }

    #[test]
    fn notifier_wakes_waiting_consumer() {
        let broker = Broker::new();
        let notifier = Notifier::new();
        let rx = broker.create_queue("pq-B", notifier.clone()).unwrap();
        let tx = broker.sender("pq-B").unwrap();

        let seen = notifier.snapshot();
        let handle = std::thread::spawn(move || {
            std::thread::sleep(Duration::from_millis(30));
            tx.send(&data(1.0, 1)).unwrap();
        });
        let newer = notifier.wait_newer(seen, Duration::from_secs(5));
        assert!(newer > seen);
        assert_eq!(rx.poll().unwrap().seq, 1);
        handle.join().unwrap();
    }

    #[test]
    fn snapshot_before_drain_never_loses_a_wakeup() {
        // Message lands between snapshot and wait: wait must return at
        // once because the generation already moved.
        let broker = Broker::new();
        let notifier = Notifier::new();
        let rx = broker.create_queue("pq-B", notifier.clone()).unwrap();
        let tx = broker.sender("pq-B").unwrap();

        let seen = notifier.snapshot();
        tx.send(&data(1.0, 1)).unwrap();
        let start = std::time::Instant::now();
        notifier.wait_newer(seen, Duration::from_secs(5));
        assert!(start.elapsed() < Duration::from_secs(1));
        assert!(rx.poll().is_some());
    }

    #[test]
    fn concurrent_senders_interleave_but_stay_fifo_per_sender() {
        let broker = Broker::new();
        let rx = broker.create_queue("pq-B", Notifier::new()).unwrap();
        let mut handles = Vec::new();
        for s in 0..4u64 {
            let tx = broker.sender("pq-B").unwrap();
            handles.push(std::thread::spawn(move || {
                for i in 0..500u64 {
                    let mut m = data(i as f64, i);
                    m.label = format!("lp{s}");
                    tx.send(&m).unwrap();
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        let mut last: HashMap<String, u64> = HashMap::new();
        let mut total = 0;
        while let Some(m) = rx.poll() {
            if let Some(prev) = last.get(&m.label) {
                assert!(m.seq > *prev, "sender {} went backwards", m.label);
            }
            last.insert(m.label, m.seq);
            total += 1;
        }
        assert_eq!(total, 2000);
    }
}
