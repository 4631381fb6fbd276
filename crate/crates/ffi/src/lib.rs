//! C ABI over `mcd-core`: an authority, a member client and an in-process
//! matching server behind opaque handles.
//!
//! Every function returns an [`McdStatus`]. On failure a message is available
//! from [`mcd_last_error`] on the same thread. Strings returned through `out`
//! pointers are owned by the caller and released with [`mcd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use mcd_core::authority::{setup, Authority, Certificate, CertificateFile, SecurityProfile, SystemParams};
use mcd_core::client::{ContactListFile, MemberState};
use mcd_core::crypto::{GroupSuite, Identity, LARGE_TEST_PRIME};
use mcd_core::net::{serve, ServerHandle, TcpTransport};
use mcd_core::server::{MatchingServer, ModeKind, ServerConfig};
use mcd_core::wire::{ErrorCode, Request, Service};
use mcd_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidIdentity = 4,
    InvalidEncoding = 5,
    Policy = 6,
    IssuanceClosed = 7,
    Unauthorized = 8,
    /// The server answered with an error code; see the message.
    ServerRejected = 9,
    /// The server was in the wrong phase or mode for the request.
    WrongPhase = 10,
    Transport = 11,
    Io = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McdProfile {
    Test = 0,
    Production = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McdSuite {
    Production = 0,
    /// Toy pairing with known discrete logs; tests only.
    Transparent = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McdMode {
    Static = 0,
    Dynamic = 1,
}

pub struct McdAuthority(Authority);

pub struct McdMember(MemberState);

pub struct McdServer {
    server: Arc<MatchingServer>,
    handle: Option<ServerHandle>,
}

struct Failure(McdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidIdentity(_) | Error::SelfContact => McdStatus::InvalidIdentity,
            Error::InvalidEncoding | Error::SlotMismatch | Error::DegenerateElement | Error::SuiteMismatch => {
                McdStatus::InvalidEncoding
            }
            Error::Policy(_) => McdStatus::Policy,
            Error::IssuanceClosed => McdStatus::IssuanceClosed,
            Error::Unauthorized => McdStatus::Unauthorized,
            Error::Server(ErrorCode::Phase | ErrorCode::Mode) => McdStatus::WrongPhase,
            Error::Server(_) | Error::UnexpectedResponse => McdStatus::ServerRejected,
            Error::Transport(_) => McdStatus::Transport,
            Error::Io(_) | Error::CorruptLog { .. } => McdStatus::Io,
            _ => McdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(McdStatus::InvalidArgument, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

/// Runs `f`, records any failure or panic, and returns the status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> McdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => McdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            McdStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(McdStatus::NullArgument, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(McdStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn handle_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(McdStatus::InvalidArgument, "string contains nul".into()))?;
    write_out(out, c.into_raw(), "out")
}

fn transport(addr: &str) -> Result<TcpTransport, Failure> {
    Ok(TcpTransport::new(addr)?)
}

/// Message for the last failure on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mcd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mcd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs system setup. `seed` is null or points at 32 bytes; seeds are only
/// accepted in the test profile.
///
/// # Safety
/// `seed` must be null or valid for 32 bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_authority_setup(
    profile: McdProfile,
    suite: McdSuite,
    seed: *const u8,
    out: *mut *mut McdAuthority,
) -> McdStatus {
    guard(|| {
        let seed = (!seed.is_null()).then(|| {
            let mut s = [0u8; 32];
            s.copy_from_slice(std::slice::from_raw_parts(seed, 32));
            s
        });
        let profile = match profile {
            McdProfile::Test => SecurityProfile::Test,
            McdProfile::Production => SecurityProfile::Production,
        };
        let suite = match suite {
            McdSuite::Production => GroupSuite::Production,
            McdSuite::Transparent => GroupSuite::transparent(LARGE_TEST_PRIME)?,
        };
        let authority = setup(profile, suite, seed)?;
        write_out(out, Box::into_raw(Box::new(McdAuthority(authority))), "out")
    })
}

/// Published parameters as JSON.
///
/// # Safety
/// `authority` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_authority_params_json(authority: *mut McdAuthority, out: *mut *mut c_char) -> McdStatus {
    guard(|| {
        let a = handle_arg(authority, "authority")?;
        write_string(out, a.0.params().to_json())
    })
}

/// Issues a certificate for `identity`, returned as JSON.
///
/// # Safety
/// `authority` must be a live handle, `identity` a C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_authority_issue(
    authority: *mut McdAuthority,
    identity: *const c_char,
    out: *mut *mut c_char,
) -> McdStatus {
    guard(|| {
        let a = handle_arg(authority, "authority")?;
        let id = Identity::new(str_arg(identity, "identity")?)?;
        let cert = a.0.issue_certificate(&id, &a.0.registry().secret_for(&id))?;
        write_string(out, serde_json::to_string(&cert.to_file())?)
    })
}

/// Erases the master secret; later issuance fails with `IssuanceClosed`.
///
/// # Safety
/// `authority` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcd_authority_erase_master(authority: *mut McdAuthority) -> McdStatus {
    guard(|| {
        handle_arg(authority, "authority")?.0.erase_master();
        Ok(())
    })
}

/// # Safety
/// `authority` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcd_authority_free(authority: *mut McdAuthority) {
    if !authority.is_null() {
        drop(Box::from_raw(authority));
    }
}

/// Creates a member from parameter, certificate and contact-list JSON. The
/// certificate must verify against the parameters.
///
/// # Safety
/// All pointers must be valid C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_member_new(
    params_json: *const c_char,
    cert_json: *const c_char,
    contacts_json: *const c_char,
    out: *mut *mut McdMember,
) -> McdStatus {
    guard(|| {
        let params = SystemParams::from_json(str_arg(params_json, "params_json")?)?;
        let cert_file: CertificateFile = serde_json::from_str(str_arg(cert_json, "cert_json")?)?;
        let contacts: ContactListFile = serde_json::from_str(str_arg(contacts_json, "contacts_json")?)?;
        if contacts.identity != cert_file.identity {
            return Err(Failure(
                McdStatus::InvalidArgument,
                "certificate and contact list name different identities".into(),
            ));
        }
        let cert = Certificate::from_file(&params.suite, &cert_file)?;
        let member = MemberState::new(Arc::new(params), cert, contacts.to_contacts()?)?;
        write_out(out, Box::into_raw(Box::new(McdMember(member))), "out")
    })
}

/// Submission phase against the server at `addr`. `failed` receives the
/// number of exchanges lost to transport errors.
///
/// # Safety
/// `member` must be a live handle, `addr` a C string, `failed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_member_submit(member: *mut McdMember, addr: *const c_char, failed: *mut u64) -> McdStatus {
    guard(|| {
        let m = handle_arg(member, "member")?;
        let n = m.0.submit_all(&transport(str_arg(addr, "addr")?)?)?;
        if !failed.is_null() {
            failed.write(n as u64);
        }
        Ok(())
    })
}

/// Query phase against the server at `addr`.
///
/// # Safety
/// `member` must be a live handle, `addr` a C string, `incomplete` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_member_query(
    member: *mut McdMember,
    addr: *const c_char,
    incomplete: *mut bool,
) -> McdStatus {
    guard(|| {
        let m = handle_arg(member, "member")?;
        let o = m.0.query_all(&transport(str_arg(addr, "addr")?)?)?;
        if !incomplete.is_null() {
            incomplete.write(o.incomplete);
        }
        Ok(())
    })
}

/// One dynamic-mode round: queries every contact not yet discovered.
///
/// # Safety
/// As for [`mcd_member_query`].
#[no_mangle]
pub unsafe extern "C" fn mcd_member_dynamic_round(
    member: *mut McdMember,
    addr: *const c_char,
    incomplete: *mut bool,
) -> McdStatus {
    guard(|| {
        let m = handle_arg(member, "member")?;
        let o = m.0.dynamic_round(&transport(str_arg(addr, "addr")?)?)?;
        if !incomplete.is_null() {
            incomplete.write(o.incomplete);
        }
        Ok(())
    })
}

/// Deletes `contact` locally and on a dynamic server.
///
/// # Safety
/// `member` must be a live handle; `addr` and `contact` C strings.
#[no_mangle]
pub unsafe extern "C" fn mcd_member_delete_contact(
    member: *mut McdMember,
    addr: *const c_char,
    contact: *const c_char,
) -> McdStatus {
    guard(|| {
        let m = handle_arg(member, "member")?;
        let contact = Identity::new(str_arg(contact, "contact")?)?;
        m.0.delete_contact(&contact, &transport(str_arg(addr, "addr")?)?)?;
        Ok(())
    })
}

/// Discovered contacts as a JSON array of identities, ascending.
///
/// # Safety
/// `member` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_member_discovered_json(member: *mut McdMember, out: *mut *mut c_char) -> McdStatus {
    guard(|| {
        let m = handle_arg(member, "member")?;
        write_string(out, serde_json::to_string(&m.0.discovered())?)
    })
}

/// # Safety
/// `member` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcd_member_free(member: *mut McdMember) {
    if !member.is_null() {
        drop(Box::from_raw(member));
    }
}

/// Starts a main-variant matching server on `listen` (e.g. "127.0.0.1:0").
/// `log` is null or a path to the durable operation log.
///
/// # Safety
/// `listen` must be a C string, `log` null or a C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_server_start(
    listen: *const c_char,
    mode: McdMode,
    log: *const c_char,
    out: *mut *mut McdServer,
) -> McdStatus {
    guard(|| {
        let listen = str_arg(listen, "listen")?;
        let log = if log.is_null() { None } else { Some(PathBuf::from(str_arg(log, "log")?)) };
        let mode = match mode {
            McdMode::Static => ModeKind::Static,
            McdMode::Dynamic => ModeKind::Dynamic,
        };
        let server = Arc::new(MatchingServer::new(ServerConfig { mode, log, ..Default::default() })?);
        let handle = serve(listen, server.clone())?;
        write_out(out, Box::into_raw(Box::new(McdServer { server, handle: Some(handle) })), "out")
    })
}

/// The bound address, e.g. "127.0.0.1:40123".
///
/// # Safety
/// `server` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_server_addr(server: *mut McdServer, out: *mut *mut c_char) -> McdStatus {
    guard(|| {
        let s = handle_arg(server, "server")?;
        let addr = s.handle.as_ref().map(|h| h.addr().to_string()).unwrap_or_default();
        write_string(out, addr)
    })
}

/// Moves a static server to its query phase.
///
/// # Safety
/// `server` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcd_server_advance_phase(server: *mut McdServer) -> McdStatus {
    guard(|| {
        let s = handle_arg(server, "server")?;
        s.server.handle(Request::AdvancePhase).into_result()?;
        Ok(())
    })
}

/// Total tuple count and mutual-pair tuple count.
///
/// # Safety
/// `server` must be a live handle; `s_c` and `s_mc` writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_server_stats(server: *mut McdServer, s_c: *mut u64, s_mc: *mut u64) -> McdStatus {
    guard(|| {
        let s = handle_arg(server, "server")?;
        let stats = s.server.stats();
        write_out(s_c, stats.s_c, "s_c")?;
        write_out(s_mc, stats.s_mc, "s_mc")
    })
}

/// Stops accepting connections and releases the server.
///
/// # Safety
/// `server` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcd_server_free(server: *mut McdServer) {
    if !server.is_null() {
        let mut s = Box::from_raw(server);
        if let Some(h) = s.handle.take() {
            h.shutdown();
        }
    }
}
