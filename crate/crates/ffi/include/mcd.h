#ifndef MCD_H
#define MCD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stdint.h>

typedef enum McdMode {
  MCD_MODE_STATIC = 0,
  MCD_MODE_DYNAMIC = 1,
} McdMode;

typedef enum McdProfile {
  MCD_PROFILE_TEST = 0,
  MCD_PROFILE_PRODUCTION = 1,
} McdProfile;

typedef enum McdStatus {
  MCD_STATUS_OK = 0,
  MCD_STATUS_NULL_ARGUMENT = 1,
  MCD_STATUS_INVALID_UTF8 = 2,
  MCD_STATUS_INVALID_ARGUMENT = 3,
  MCD_STATUS_INVALID_IDENTITY = 4,
  MCD_STATUS_INVALID_ENCODING = 5,
  MCD_STATUS_POLICY = 6,
  MCD_STATUS_ISSUANCE_CLOSED = 7,
  MCD_STATUS_UNAUTHORIZED = 8,
  /*
   The server answered with an error code; see the message.
   */
  MCD_STATUS_SERVER_REJECTED = 9,
  /*
   The server was in the wrong phase or mode for the request.
   */
  MCD_STATUS_WRONG_PHASE = 10,
  MCD_STATUS_TRANSPORT = 11,
  MCD_STATUS_IO = 12,
  MCD_STATUS_PANIC = 13,
} McdStatus;

typedef enum McdSuite {
  MCD_SUITE_PRODUCTION = 0,
  /*
   Toy pairing with known discrete logs; tests only.
   */
  MCD_SUITE_TRANSPARENT = 1,
} McdSuite;

typedef struct McdAuthority McdAuthority;

typedef struct McdMember McdMember;

typedef struct McdServer McdServer;

/*
 Message for the last failure on this thread, or null. Valid until the
 next call into this library on the same thread.
 */
const char *mcd_last_error(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void mcd_string_free(char *s);

/*
 Runs system setup. `seed` is null or points at 32 bytes; seeds are only
 accepted in the test profile.

 # Safety
 `seed` must be null or valid for 32 bytes; `out` must be writable.
 */
enum McdStatus mcd_authority_setup(enum McdProfile profile,
                                   enum McdSuite suite,
                                   const uint8_t *seed,
                                   struct McdAuthority **out);

/*
 Published parameters as JSON.

 # Safety
 `authority` must be a live handle; `out` must be writable.
 */
enum McdStatus mcd_authority_params_json(struct McdAuthority *authority, char **out);

/*
 Issues a certificate for `identity`, returned as JSON.

 # Safety
 `authority` must be a live handle, `identity` a C string, `out` writable.
 */
enum McdStatus mcd_authority_issue(struct McdAuthority *authority,
                                   const char *identity,
                                   char **out);

/*
 Erases the master secret; later issuance fails with `IssuanceClosed`.

 # Safety
 `authority` must be a live handle.
 */
enum McdStatus mcd_authority_erase_master(struct McdAuthority *authority);

/*
 # Safety
 `authority` must be null or a live handle, not used afterwards.
 */
void mcd_authority_free(struct McdAuthority *authority);

/*
 Creates a member from parameter, certificate and contact-list JSON. The
 certificate must verify against the parameters.

 # Safety
 All pointers must be valid C strings; `out` must be writable.
 */
enum McdStatus mcd_member_new(const char *params_json,
                              const char *cert_json,
                              const char *contacts_json,
                              struct McdMember **out);

/*
 Submission phase against the server at `addr`. `failed` receives the
 number of exchanges lost to transport errors.

 # Safety
 `member` must be a live handle, `addr` a C string, `failed` null or writable.
 */
enum McdStatus mcd_member_submit(struct McdMember *member, const char *addr, uint64_t *failed);

/*
 Query phase against the server at `addr`.

 # Safety
 `member` must be a live handle, `addr` a C string, `incomplete` null or writable.
 */
enum McdStatus mcd_member_query(struct McdMember *member, const char *addr, bool *incomplete);

/*
 One dynamic-mode round: queries every contact not yet discovered.

 # Safety
 As for [`mcd_member_query`].
 */
enum McdStatus mcd_member_dynamic_round(struct McdMember *member,
                                        const char *addr,
                                        bool *incomplete);

/*
 Deletes `contact` locally and on a dynamic server.

 # Safety
 `member` must be a live handle; `addr` and `contact` C strings.
 */
enum McdStatus mcd_member_delete_contact(struct McdMember *member,
                                         const char *addr,
                                         const char *contact);

/*
 Discovered contacts as a JSON array of identities, ascending.

 # Safety
 `member` must be a live handle; `out` writable.
 */
enum McdStatus mcd_member_discovered_json(struct McdMember *member, char **out);

/*
 # Safety
 `member` must be null or a live handle, not used afterwards.
 */
void mcd_member_free(struct McdMember *member);

/*
 Starts a main-variant matching server on `listen` (e.g. "127.0.0.1:0").
 `log` is null or a path to the durable operation log.

 # Safety
 `listen` must be a C string, `log` null or a C string, `out` writable.
 */
enum McdStatus mcd_server_start(const char *listen,
                                enum McdMode mode,
                                const char *log,
                                struct McdServer **out);

/*
 The bound address, e.g. "127.0.0.1:40123".

 # Safety
 `server` must be a live handle; `out` writable.
 */
enum McdStatus mcd_server_addr(struct McdServer *server, char **out);

/*
 Moves a static server to its query phase.

 # Safety
 `server` must be a live handle.
 */
enum McdStatus mcd_server_advance_phase(struct McdServer *server);

/*
 Total tuple count and mutual-pair tuple count.

 # Safety
 `server` must be a live handle; `s_c` and `s_mc` writable.
 */
enum McdStatus mcd_server_stats(struct McdServer *server, uint64_t *s_c, uint64_t *s_mc);

/*
 Stops accepting connections and releases the server.

 # Safety
 `server` must be null or a live handle, not used afterwards.
 */
void mcd_server_free(struct McdServer *server);

#endif  /* MCD_H */
