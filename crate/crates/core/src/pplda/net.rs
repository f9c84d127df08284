//! Blocking TCP transport for the three roles.
//!
//! MP accepts ES connections and opens each with a `KeyAnnounce`. ES holds
//! one connection to MP and serves users one at a time: it forwards the
//! announcement, runs both rounds, passes its output to MP and relays MP's
//! answer back to the user.

use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use rand::{CryptoRng, RngCore};

use super::es::EnrollmentServer;
use super::message::{Message, MpPublish, RoundTag};
use super::mp::MatrixPublisher;
use super::user::UserClient;
use super::wire::{read_expect, write_message};
use super::UserTemplate;
use crate::{Error, Result};

/// Serves ES connections. Stops after `limit` connections when given.
pub fn serve_mp(listener: &TcpListener, mp: &mut MatrixPublisher, limit: Option<usize>) -> Result<()> {
    for (served, stream) in listener.incoming().enumerate() {
        if let Err(e) = handle_es_link(stream?, mp) {
            eprintln!("mp: ES link closed: {e}");
        }
        if limit.is_some_and(|l| served + 1 >= l) {
            break;
        }
    }
    Ok(())
}

fn handle_es_link(mut s: TcpStream, mp: &mut MatrixPublisher) -> Result<()> {
    write_message(&mut s, &Message::KeyAnnounce(mp.announce()))?;
    loop {
        let out = match read_expect(&mut s, RoundTag::EsOutput) {
            Ok((m, _)) => m.into_es_output()?,
            // ES hung up between outputs
            Err(Error::Wire(msg)) if msg == "truncated frame" => return Ok(()),
            Err(e) => return Err(e),
        };
        let outcome = mp.process(&out)?;
        if let Some(p) = outcome.publication() {
            eprintln!("mp: published generation {} for {} users", p.model.generation, p.users);
        }
        write_message(&mut s, &Message::MpPublish(outcome.to_message(out.users)))?;
    }
}

/// Connects to MP and builds an empty enrollment server from its key.
pub fn connect_es<A: ToSocketAddrs, R: RngCore + CryptoRng + ?Sized>(
    mp_addr: A,
    rng: &mut R,
) -> Result<(EnrollmentServer, TcpStream)> {
    let mut link = TcpStream::connect(mp_addr)?;
    let (announce, _) = read_expect(&mut link, RoundTag::KeyAnnounce)?;
    let es = EnrollmentServer::new(announce.into_key_announce()?, rng)?;
    Ok((es, link))
}

/// Serves users sequentially. Stops after `limit` connections when given.
pub fn serve_es<R: RngCore + CryptoRng + ?Sized>(
    listener: &TcpListener,
    es: &mut EnrollmentServer,
    mp_link: &mut TcpStream,
    rng: &mut R,
    limit: Option<usize>,
) -> Result<()> {
    for (served, stream) in listener.incoming().enumerate() {
        match handle_user(stream?, es, mp_link, rng) {
            Ok(p) => eprintln!("es: enrolled user {} (pending {})", p.users, p.pending),
            Err(e) => {
                es.abort();
                eprintln!("es: enrollment failed: {e}");
                if matches!(e, Error::Io(_)) && mp_link.peer_addr().is_err() {
                    return Err(e);
                }
            }
        }
        if limit.is_some_and(|l| served + 1 >= l) {
            break;
        }
    }
    Ok(())
}

fn handle_user<R: RngCore + CryptoRng + ?Sized>(
    mut s: TcpStream,
    es: &mut EnrollmentServer,
    mp_link: &mut TcpStream,
    rng: &mut R,
) -> Result<MpPublish> {
    write_message(&mut s, &Message::KeyAnnounce(es.announce().clone()))?;
    let (m1, _) = read_expect(&mut s, RoundTag::Enroll1)?;
    let reply = es.round1(&m1.into_enroll1()?, rng)?;
    write_message(&mut s, &Message::EsReply(reply))?;
    let (m2, _) = read_expect(&mut s, RoundTag::Enroll2)?;
    let out = es.round2(&m2.into_enroll2()?)?;
    write_message(mp_link, &Message::EsOutput(out))?;
    let (publish, _) = read_expect(mp_link, RoundTag::MpPublish)?;
    write_message(&mut s, &publish)?;
    publish.into_mp_publish()
}

/// Runs the user side against an ES.
pub fn enroll<A: ToSocketAddrs, R: RngCore + CryptoRng + ?Sized>(
    es_addr: A,
    template: UserTemplate,
    rng: &mut R,
) -> Result<MpPublish> {
    let mut s = TcpStream::connect(es_addr)?;
    let (announce, _) = read_expect(&mut s, RoundTag::KeyAnnounce)?;
    let mut user = UserClient::new(&announce.into_key_announce()?, template, rng)?;
    write_message(&mut s, &Message::Enroll1(user.round1(rng)?))?;
    let (reply, _) = read_expect(&mut s, RoundTag::EsReply)?;
    write_message(&mut s, &Message::Enroll2(user.round2(&reply.into_es_reply()?, rng)?))?;
    let (publish, _) = read_expect(&mut s, RoundTag::MpPublish)?;
    publish.into_mp_publish()
}
